//! Offline linearization-point assignment: each rule is stated per
//! operation over the whole trace.

use std::collections::HashMap;

use super::{Placement, Rank};
use crate::algorithms::{AlgorithmId, Line, OpRequest, OpResponse};
use crate::error::{Error, Result};
use crate::primitives::{Pid, Response, Value};
use crate::sim::{replay_trace, Event, OpRecord, Trace};

struct Ctx<'a> {
    trace: &'a Trace,
    /// Event indices of each operation, keyed by `(pid, op_seq)`.
    by_op: HashMap<(Pid, usize), Vec<usize>>,
}

impl<'a> Ctx<'a> {
    fn new(trace: &'a Trace) -> Self {
        let mut by_op: HashMap<(Pid, usize), Vec<usize>> = HashMap::new();
        for (k, e) in trace.events.iter().enumerate() {
            by_op.entry((e.pid, e.op_seq)).or_default().push(k);
        }
        Ctx { trace, by_op }
    }

    fn events(&self, op: &OpRecord) -> impl Iterator<Item = &'a Event> + '_ {
        let trace = self.trace;
        self.by_op
            .get(&(op.pid, op.op_seq))
            .into_iter()
            .flatten()
            .map(move |&k| &trace.events[k])
    }

    fn first(&self, op: &OpRecord, line: Line) -> Option<&'a Event> {
        self.events(op).find(|e| e.line == line)
    }

    fn last(&self, op: &OpRecord, line: Line) -> Option<&'a Event> {
        self.events(op).filter(|e| e.line == line).last()
    }

    /// The operation's successful t&s and the element it last read before it.
    fn winning_tas(&self, op: &OpRecord, tas: Line, read: Line) -> Option<(&'a Event, u64)> {
        let mut x = None;
        for e in self.events(op) {
            if e.line == read {
                x = e.response.value().and_then(Value::as_int);
            }
            if e.line == tas && e.response == Response::Bit(0) {
                return Some((e, x.expect("an element is read before its t&s")));
            }
        }
        None
    }

    /// Successful t&s events on `TS[cell]` with seq in `(after, before)`.
    fn tas_on(
        &self,
        tas: Line,
        cell: u32,
        after: usize,
        before: Option<usize>,
    ) -> impl Iterator<Item = &'a Event> + '_ {
        self.trace.events[after + 1..]
            .iter()
            .take_while(move |e| before.is_none_or(|b| e.seq < b))
            .filter(move |e| e.line == tas && e.obj.index == Some(cell) && e.response == Response::Bit(0))
    }
}

fn cell(e: &Event) -> u32 {
    e.obj.index.expect("array cell")
}

fn place(op: &OpRecord, response: OpResponse, point: usize, rank: Rank) -> Placement {
    Placement {
        pid: op.pid,
        op_seq: op.op_seq,
        response,
        point,
        rank,
    }
}

/// Assigns linearization points to the operations of `trace` using the
/// rules of its algorithm (for li-queue, the natural rules that the
/// algorithm fails to satisfy as a bag). The result is sorted by
/// `(point, rank)`.
///
/// Completed operations that no rule places are a rule-coverage error.
pub fn assign_lin_points(trace: &Trace) -> Result<Vec<Placement>> {
    let regenerated;
    let trace = if trace.algorithm == AlgorithmId::Wf1b
        && trace
            .events
            .iter()
            .any(|e| e.line == Line::WfTakeReadAlloc && e.view.is_none())
    {
        // The wait-free EMPTY rule needs the configuration at Allocated
        // reads; re-executing the trace records it.
        regenerated = replay_trace(trace)?;
        &regenerated
    } else {
        trace
    };
    let cx = Ctx::new(trace);
    let mut out = Vec::new();
    for op in &trace.ops {
        if let Some(p) = match trace.algorithm {
            AlgorithmId::LiQueue => li_queue(&cx, op),
            AlgorithmId::UnboundedSl => coupled_rules(&cx, op, &UB),
            AlgorithmId::Wf1b => wait_free(&cx, op)?,
            AlgorithmId::Sl1b => coupled_rules(&cx, op, &S1),
            AlgorithmId::SlBb => b_bounded(&cx, op),
        } {
            out.push(p);
        } else if op.is_complete() {
            return Err(Error::RuleCoverage(format!(
                "completed operation {} (p{} #{}) has no linearization point",
                op.request, op.pid, op.op_seq
            )));
        }
    }
    out.sort_by_key(|p| (p.point, p.rank));
    Ok(out)
}

fn li_queue(cx: &Ctx, op: &OpRecord) -> Option<Placement> {
    match op.request {
        OpRequest::Insert(_) => cx
            .first(op, Line::LqInsWriteItem)
            .map(|e| place(op, OpResponse::Ok, e.seq, Rank::single())),
        OpRequest::Take => {
            if let Some((e, x)) = cx.winning_tas(op, Line::LqTakeTas, Line::LqTakeReadItem) {
                return Some(place(op, OpResponse::Value(x), e.seq, Rank::single()));
            }
            if op.response == Some(OpResponse::Empty) {
                return cx
                    .last(op, Line::LqTakeReadMax)
                    .map(|e| place(op, OpResponse::Empty, e.seq, Rank::single()));
            }
            None
        }
    }
}

/// Line labels of the two algorithms with coupled Inserts on a 1-bounded
/// or unbounded array.
struct CoupledLines {
    write_item: Line,
    done: Line,
    read_item: Line,
    tas: Line,
    empty: Line,
    check_ts: Option<Line>,
}

const UB: CoupledLines = CoupledLines {
    write_item: Line::UbInsWriteItem,
    done: Line::UbInsDone,
    read_item: Line::UbTakeReadItem,
    tas: Line::UbTakeTas,
    empty: Line::UbTakeRereadDone,
    check_ts: None,
};

const S1: CoupledLines = CoupledLines {
    write_item: Line::S1InsWriteItem,
    done: Line::S1InsWriteDone,
    read_item: Line::S1TakeReadItem,
    tas: Line::S1TakeTas,
    empty: Line::S1TakeRereadDone,
    check_ts: Some(Line::S1InsCheckTs),
};

fn coupled_rules(cx: &Ctx, op: &OpRecord, l: &CoupledLines) -> Option<Placement> {
    match op.request {
        OpRequest::Insert(_) => {
            if let Some(check) = l.check_ts {
                if op.response == Some(OpResponse::Full) {
                    return cx
                        .events(op)
                        .find(|e| e.line == check && e.response == Response::Bit(0))
                        .map(|e| place(op, OpResponse::Full, e.seq, Rank::single()));
                }
            }
            let w = cx.first(op, l.write_item)?;
            let done = cx.first(op, l.done).map(|e| e.seq);
            if let Some(t) = cx.tas_on(l.tas, cell(w), w.seq, done).next() {
                return Some(place(op, OpResponse::Ok, t.seq, Rank::coupled_insert(cell(t), t.pid)));
            }
            done.map(|d| place(op, OpResponse::Ok, d, Rank::single()))
        }
        OpRequest::Take => {
            if let Some((e, x)) = cx.winning_tas(op, l.tas, l.read_item) {
                return Some(place(op, OpResponse::Value(x), e.seq, Rank::taker(cell(e), e.pid)));
            }
            if op.response == Some(OpResponse::Empty) {
                return cx
                    .last(op, l.empty)
                    .map(|e| place(op, OpResponse::Empty, e.seq, Rank::single()));
            }
            None
        }
    }
}

fn wait_free(cx: &Ctx, op: &OpRecord) -> Result<Option<Placement>> {
    Ok(match op.request {
        OpRequest::Insert(_) => match op.response {
            Some(OpResponse::Full) => cx
                .events(op)
                .find(|e| e.line == Line::WfInsCheckTs && e.response == Response::Bit(0))
                .map(|e| place(op, OpResponse::Full, e.seq, Rank::single())),
            _ => cx
                .first(op, Line::WfInsWriteItem)
                .map(|e| place(op, OpResponse::Ok, e.seq, Rank::single())),
        },
        OpRequest::Take => {
            if let Some((e, x)) = cx.winning_tas(op, Line::WfTakeTas, Line::WfTakeReadItem) {
                return Ok(Some(place(
                    op,
                    OpResponse::Value(x),
                    e.seq,
                    Rank::taker(cell(e), e.pid),
                )));
            }
            if op.response != Some(OpResponse::Empty) {
                return Ok(None);
            }
            let e = cx
                .first(op, Line::WfTakeReadAlloc)
                .ok_or_else(|| Error::RuleCoverage("EMPTY Take without an Allocated read".into()))?;
            let view = e
                .view
                .ok_or_else(|| Error::RuleCoverage(format!("no recorded configuration at seq {}", e.seq)))?;
            if view.item.is_bottom() || view.ts == 1 {
                return Ok(Some(place(op, OpResponse::Empty, e.seq, Rank::single())));
            }
            let a = match e.response.value() {
                Some(Value::Int(a)) => a as u32,
                _ => return Err(Error::RuleCoverage(format!("bad Allocated read at seq {}", e.seq))),
            };
            cx.tas_on(Line::WfTakeTas, a, e.seq, op.complete)
                .next()
                .map(|t| place(op, OpResponse::Empty, t.seq, Rank::deferred_empty(op.pid)))
        }
    })
}

fn b_bounded(cx: &Ctx, op: &OpRecord) -> Option<Placement> {
    let trace = cx.trace;
    let takedone = |e: &Event| matches!(e.line, Line::SbTakeSuccessTakeDone | Line::SbTakeFailTakeDone);
    // Cell and InsertDone write of every uncoupled Insert that wrote one.
    let uncoupled_writes = || {
        trace.ops.iter().filter_map(|o| {
            let w = cx.first(o, Line::SbInsWriteItem)?;
            let d = cx.first(o, Line::SbInsWriteInsertDone)?;
            (coupling(cx, o).is_none()).then_some((cell(w), d.seq))
        })
    };
    match op.request {
        OpRequest::Insert(_) => {
            if op.response == Some(OpResponse::Full) {
                return cx
                    .events(op)
                    .find(|e| e.line == Line::SbInsRereadTakeDone && e.response == Response::Flag(false))
                    .map(|e| place(op, OpResponse::Full, e.seq, Rank::single()));
            }
            if let Some((t, tk_write)) = coupling(cx, op) {
                return Some(place(
                    op,
                    OpResponse::Ok,
                    tk_write,
                    Rank::coupled_insert(cell(t), t.pid),
                ));
            }
            cx.first(op, Line::SbInsWriteInsertDone)
                .map(|d| place(op, OpResponse::Ok, d.seq, Rank::last()))
        }
        OpRequest::Take => {
            if let Some((t, x)) = cx.winning_tas(op, Line::SbTakeTas, Line::SbTakeReadItem) {
                let a = cell(t);
                let first = trace.events[t.seq + 1..].iter().find(|e| {
                    takedone(e)
                        || (e.line == Line::SbInsCheckTs && e.obj.index == Some(a) && e.response == Response::Bit(1))
                        || (e.line == Line::SbInsWriteInsertDone
                            && uncoupled_writes().any(|(c, d)| d == e.seq && c != a))
                })?;
                return Some(place(op, OpResponse::Value(x), first.seq, Rank::taker(a, op.pid)));
            }
            let r = cx
                .events(op)
                .find(|e| e.line == Line::SbTakeRereadInsertDone && e.response == Response::Flag(false))?;
            let f = cx.first(op, Line::SbTakeFailTakeDone).map(|e| e.seq);
            if let Some(u) = uncoupled_writes()
                .map(|(_, d)| d)
                .filter(|&d| d > r.seq && f.is_none_or(|f| d < f))
                .min()
            {
                return Some(place(op, OpResponse::Empty, u, Rank::failing_take(op.pid)));
            }
            f.map(|f| place(op, OpResponse::Empty, f, Rank::failing_take(op.pid)))
        }
    }
}

/// For an Insert of the b-bounded bag: the successful t&s on its cell made
/// while it was poised to write InsertDone, and the TakeDone write that
/// followed it before InsertDone, if both exist.
fn coupling<'a>(cx: &Ctx<'a>, op: &OpRecord) -> Option<(&'a Event, usize)> {
    let w = cx.first(op, Line::SbInsWriteItem)?;
    let d = cx.first(op, Line::SbInsWriteInsertDone).map(|e| e.seq);
    let t = cx.tas_on(Line::SbTakeTas, cell(w), w.seq, d).next()?;
    let tk_write = cx.trace.events[t.seq + 1..]
        .iter()
        .take_while(|e| d.is_none_or(|d| e.seq < d))
        .find(|e| matches!(e.line, Line::SbTakeSuccessTakeDone | Line::SbTakeFailTakeDone))?;
    Some((t, tk_write.seq))
}
