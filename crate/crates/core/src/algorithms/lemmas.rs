//! Runtime-checkable invariants of the single-producer bags.
//!
//! [`LemmaMonitor`] is fed every step of an execution together with the
//! configuration reached by that step. It is cheap to clone, so explorers
//! carry one per tree node.

use std::fmt;

use super::{AlgorithmId, AlgorithmInstance, Line, StepRecord};
use crate::primitives::{Action, ObjectState, Pid, Response, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lemma {
    /// 1-bounded bags: outside the producer's clear-to-write window (and
    /// after its first item write) only `Items[Allocated]` holds an
    /// element; inside the window, or before the first write, none does.
    NoTwoItems,
    /// `k ∈ used` implies `Items[k] = ⊥`.
    BottomWhileUsed,
    /// When the producer writes an element to `Items[m]`, `TS[m] = 0`.
    TsZeroOnWrite,
    /// b-bounded bag: `|alloc| ≤ b`.
    AllocBound,
    /// b-bounded bag: at most one successful t&s on `TS[a]` between the
    /// producer's write of `Items[a]` and its next `InsertDone` write.
    SingleCoupling,
    /// b-bounded bag: a cell holding an element is allocated.
    ItemImpliesAllocated,
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lemma::NoTwoItems => "no-two-items",
            Lemma::BottomWhileUsed => "bottom-while-used",
            Lemma::TsZeroOnWrite => "ts-zero-on-write",
            Lemma::AllocBound => "alloc-bound",
            Lemma::SingleCoupling => "single-coupling",
            Lemma::ItemImpliesAllocated => "item-implies-allocated",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaViolation {
    pub lemma: Lemma,
    pub detail: String,
}

impl fmt::Display for LemmaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.lemma, self.detail)
    }
}

/// Incremental lemma checker. Equality and hashing ignore the check
/// counter, so monitors can be part of memoization keys.
#[derive(Clone, Debug, Default)]
pub struct LemmaMonitor {
    /// Cell written by the producer's pending Insert and the number of
    /// successful t&s operations on it since the write.
    written: Option<(u32, u32)>,
    checks: u64,
}

impl PartialEq for LemmaMonitor {
    fn eq(&self, other: &Self) -> bool {
        self.written == other.written
    }
}

impl Eq for LemmaMonitor {}

impl std::hash::Hash for LemmaMonitor {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.written.hash(state);
    }
}

fn item(inst: &AlgorithmInstance, k: u32) -> Value {
    match inst.memory().state(inst.layout().item(k)) {
        Ok(ObjectState::Register(v)) => *v,
        _ => Value::Bottom,
    }
}

fn ts(inst: &AlgorithmInstance, k: u32) -> u8 {
    match inst.memory().state(inst.layout().ts(k)) {
        Ok(ObjectState::Bit(b)) => *b,
        _ => 0,
    }
}

impl LemmaMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of individual lemma evaluations performed so far.
    pub fn checks(&self) -> u64 {
        self.checks
    }

    /// Checks the step `rec` by `pid`, given the configuration `after` it.
    pub fn observe(&mut self, after: &AlgorithmInstance, pid: Pid, rec: &StepRecord) -> Vec<LemmaViolation> {
        let algorithm = after.algorithm();
        if !algorithm.single_producer() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let view = after
            .producer_view()
            .expect("single-producer algorithms have a producer");
        let cells = match algorithm {
            AlgorithmId::SlBb => (after.n() + after.b()) as u32,
            _ => after.n() as u32 + 1,
        };

        // Item writes by the producer.
        if pid == 0 {
            if let Action::Write(Value::Int(_)) = rec.action {
                if matches!(
                    rec.line,
                    Line::WfInsWriteItem | Line::S1InsWriteItem | Line::SbInsWriteItem
                ) {
                    self.checks += 1;
                    let m = rec.obj.index;
                    if ts(after, m) != 0 {
                        out.push(LemmaViolation {
                            lemma: Lemma::TsZeroOnWrite,
                            detail: format!("TS[{m}] = 1 when the producer wrote Items[{m}]"),
                        });
                    }
                    if algorithm == AlgorithmId::SlBb {
                        self.written = Some((m, 0));
                    }
                }
            }
            if rec.line == Line::SbInsWriteInsertDone {
                self.written = None;
            }
        }

        if algorithm == AlgorithmId::SlBb {
            if let (Some((cell, count)), Line::SbTakeTas, Response::Bit(0)) =
                (self.written.as_mut(), rec.line, rec.response)
            {
                if rec.obj.index == *cell {
                    *count += 1;
                    self.checks += 1;
                    if *count > 1 {
                        out.push(LemmaViolation {
                            lemma: Lemma::SingleCoupling,
                            detail: format!("{count} successful t&s on TS[{cell}] while the Insert is poised"),
                        });
                    }
                }
            }
            self.checks += 1;
            if view.alloc.len() > after.b() {
                out.push(LemmaViolation {
                    lemma: Lemma::AllocBound,
                    detail: format!("alloc = {} exceeds b = {}", view.alloc, after.b()),
                });
            }
            for k in 1..=cells {
                self.checks += 1;
                if !item(after, k).is_bottom() && !view.alloc.contains(k) {
                    out.push(LemmaViolation {
                        lemma: Lemma::ItemImpliesAllocated,
                        detail: format!("Items[{k}] holds an element but {k} is not in alloc"),
                    });
                }
            }
        } else {
            self.checks += 1;
            let holding: Vec<u32> = (1..=cells).filter(|&k| !item(after, k).is_bottom()).collect();
            let allocated = match after.memory().state(after.layout().allocated) {
                Ok(ObjectState::Register(Value::Int(a))) => *a as u32,
                _ => 0,
            };
            let expected: Vec<u32> = if !view.wrote_item || view.between_clear_and_write {
                Vec::new()
            } else {
                vec![allocated]
            };
            if holding != expected {
                out.push(LemmaViolation {
                    lemma: Lemma::NoTwoItems,
                    detail: format!(
                        "cells holding elements {holding:?}, expected {expected:?} (Allocated = {allocated})"
                    ),
                });
            }
        }

        for k in view.used.iter() {
            self.checks += 1;
            if !item(after, k).is_bottom() {
                out.push(LemmaViolation {
                    lemma: Lemma::BottomWhileUsed,
                    detail: format!("{k} is in used but Items[{k}] = {}", item(after, k)),
                });
            }
        }
        out
    }
}
