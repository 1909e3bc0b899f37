use std::fmt;
use std::sync::Arc;

use super::{assign_lin_points, LinTracker, Placement};
use crate::algorithms::lemmas::LemmaMonitor;
use crate::algorithms::{AlgorithmId, Line, OpRequest, StepRecord};
use crate::error::{Error, Result};
use crate::primitives::Pid;
use crate::sim::{fold_tree, replay_trace, run, workload_of, Bounds, Fold, GraphStats, Sim, Trace, Workload};
use crate::specs::{linearizable, spec_step, History, LinVerdict, Spec, SpecState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// A point outside its operation's interval.
    Interval,
    /// The linearization is not legal under the specification.
    Legality,
    /// The assignment for some prefix is not a prefix of the assignment
    /// for the whole trace.
    PrefixMonotonicity,
    /// A completed operation got no point.
    RuleCoverage,
    /// Two successful Takes on the same cell placed at the same step.
    DistinctPoint,
    /// An instrumented algorithm invariant failed.
    Lemma,
    /// A repeat loop restarted without an intervening completion.
    LoopProgress,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Interval => "interval",
            ViolationKind::Legality => "legality",
            ViolationKind::PrefixMonotonicity => "prefix-monotonicity",
            ViolationKind::RuleCoverage => "rule-coverage",
            ViolationKind::DistinctPoint => "distinct-point",
            ViolationKind::Lemma => "lemma",
            ViolationKind::LoopProgress => "loop-progress",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Step at which the check failed.
    pub seq: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(s) => write!(f, "{} at seq {}: {}", self.kind, s, self.detail),
            None => write!(f, "{}: {}", self.kind, self.detail),
        }
    }
}

fn violation(kind: ViolationKind, seq: Option<usize>, detail: impl Into<String>) -> Violation {
    Violation {
        kind,
        seq,
        detail: detail.into(),
    }
}

fn request_of(trace: &Trace, p: &Placement) -> Option<OpRequest> {
    trace.op_index(p.pid, p.op_seq).map(|i| trace.ops[i].request)
}

/// Checks one trace against its algorithm's rules: interval containment,
/// legality under `spec`, (b-bounded bag) distinct points for Takes of the
/// same cell and, for algorithms whose rules only look at the past,
/// prefix-monotonicity over every event prefix. Returns the violations
/// found; an empty list means the trace passes.
pub fn validate_trace(trace: &Trace, spec: Spec) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    let full = match assign_lin_points(trace) {
        Ok(a) => a,
        Err(Error::RuleCoverage(msg)) => return Ok(vec![violation(ViolationKind::RuleCoverage, None, msg)]),
        Err(e) => return Err(e),
    };
    for p in &full {
        let op = &trace.ops[trace.op_index(p.pid, p.op_seq).expect("placed operations exist")];
        if p.point < op.invoke || op.complete.is_some_and(|c| p.point > c) {
            out.push(violation(
                ViolationKind::Interval,
                Some(p.point),
                format!(
                    "{p} outside its interval [{}, {}]",
                    op.invoke,
                    op.complete.map_or("-".into(), |c| c.to_string())
                ),
            ));
        }
    }
    let mut state = SpecState::new();
    for p in &full {
        let op = &trace.ops[trace.op_index(p.pid, p.op_seq).expect("placed operations exist")];
        // A completed operation is judged by what it returned.
        let response = op.response.unwrap_or(p.response);
        match spec_step(spec, &state, op.request, response) {
            Some(next) => state = next,
            None => {
                out.push(violation(
                    ViolationKind::Legality,
                    Some(p.point),
                    format!(
                        "{}/{response} illegal in state {:?} under {spec}",
                        op.request,
                        state.items()
                    ),
                ));
                break;
            }
        }
    }
    for w in full.windows(2) {
        if w[0].point == w[1].point {
            if let (Some(a), Some(b)) = (w[0].rank.taker_cell(), w[1].rank.taker_cell()) {
                if a == b {
                    out.push(violation(
                        ViolationKind::DistinctPoint,
                        Some(w[0].point),
                        format!("{} and {} take cell {a} at the same step", w[0], w[1]),
                    ));
                }
            }
        }
    }
    if retroactive(trace.algorithm) {
        return Ok(out);
    }
    let entries: Vec<_> = full.iter().map(Placement::entry).collect();
    for k in 0..trace.len() {
        let sub = match assign_lin_points(&trace.prefix(k)) {
            Ok(a) => a,
            Err(Error::RuleCoverage(msg)) => {
                out.push(violation(
                    ViolationKind::RuleCoverage,
                    Some(k),
                    format!("prefix of length {k}: {msg}"),
                ));
                break;
            }
            Err(e) => return Err(e),
        };
        let sub: Vec<_> = sub.iter().map(Placement::entry).collect();
        if sub.len() > entries.len() || sub[..] != entries[..sub.len()] {
            out.push(violation(
                ViolationKind::PrefixMonotonicity,
                Some(k),
                format!("the assignment for the first {k} events is not a prefix of the full assignment"),
            ));
            break;
        }
    }
    Ok(out)
}

/// Algorithms whose rules may place an operation at a step earlier than
/// steps already used, so an assignment is only final for a whole trace.
fn retroactive(algorithm: AlgorithmId) -> bool {
    matches!(algorithm, AlgorithmId::LiQueue | AlgorithmId::Wf1b)
}

/// Downward state of the exhaustive validator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct VState {
    tracker: LinTracker,
    spec: SpecState,
    /// Placed operations, indexed by workload position.
    placed: u64,
    monitor: LemmaMonitor,
    /// Processes for which an Insert (resp. Take) completed since their
    /// last bracketing read.
    insert_since: u64,
    take_since: u64,
    /// Placements made so far, kept only for retroactive rules whose
    /// legality is checked once the trace ends.
    retro: Vec<Placement>,
    violation: Option<Violation>,
}

struct Validator {
    spec: Spec,
    algorithm: AlgorithmId,
    offsets: Vec<usize>,
    lemma_checks: u64,
    retroactive: bool,
}

impl Validator {
    fn new(workload: &Workload, spec: Spec) -> Result<Self> {
        let mut offsets = Vec::with_capacity(workload.ops.len());
        let mut total = 0;
        for l in &workload.ops {
            offsets.push(total);
            total += l.len();
        }
        if total > 64 {
            return Err(Error::usage("workloads are limited to 64 operations"));
        }
        Ok(Validator {
            spec,
            algorithm: workload.algorithm,
            offsets,
            lemma_checks: 0,
            retroactive: retroactive(workload.algorithm),
        })
    }

    fn check_step(&mut self, st: &mut VState, sim: &Sim, pid: Pid, rec: &StepRecord) -> Option<Violation> {
        let trace = sim.trace();
        let e = trace.events.last().expect("a step was taken");
        let seq = e.seq;
        // Lemmas.
        let lemma = st.monitor.observe(sim.instance(), pid, rec);
        self.lemma_checks = self.lemma_checks.max(st.monitor.checks());
        if let Some(v) = lemma.first() {
            return Some(violation(ViolationKind::Lemma, Some(seq), v.to_string()));
        }
        // Loop progress.
        if let Some(v) = self.progress(st, e.line, rec, pid, seq, sim) {
            return Some(v);
        }
        let placements = st.tracker.feed(e, rec.completed);
        let mut prev_cell: Option<u32> = None;
        for p in &placements {
            let op = &trace.ops[trace.op_index(p.pid, p.op_seq).expect("placed operations exist")];
            if p.point < op.invoke || op.complete.is_some_and(|c| p.point > c || c < seq) {
                return Some(violation(
                    ViolationKind::Interval,
                    Some(seq),
                    format!("{p} outside its interval"),
                ));
            }
            if self.retroactive {
                st.retro.push(*p);
                st.placed |= 1u64 << (self.offsets[p.pid] + p.op_seq);
                continue;
            }
            if p.point != seq {
                return Some(violation(
                    ViolationKind::PrefixMonotonicity,
                    Some(seq),
                    format!("{p} is placed before operations already linearized"),
                ));
            }
            let cell = p.rank.taker_cell();
            if cell.is_some() && cell == prev_cell {
                return Some(violation(
                    ViolationKind::DistinctPoint,
                    Some(seq),
                    format!("two Takes of cell {} placed at one step", cell.unwrap_or(0)),
                ));
            }
            prev_cell = cell.or(prev_cell);
            let bit = 1u64 << (self.offsets[p.pid] + p.op_seq);
            st.placed |= bit;
            match spec_step(self.spec, &st.spec, op.request, p.response) {
                Some(next) => st.spec = next,
                None => {
                    return Some(violation(
                        ViolationKind::Legality,
                        Some(seq),
                        format!(
                            "{}/{} illegal in state {:?} under {}",
                            op.request,
                            p.response,
                            st.spec.items(),
                            self.spec
                        ),
                    ))
                }
            }
        }
        if rec.completed.is_some() {
            let bit = 1u64 << (self.offsets[pid] + e.op_seq);
            if st.placed & bit == 0 {
                return Some(violation(
                    ViolationKind::RuleCoverage,
                    Some(seq),
                    format!("p{pid}#{} completed without a linearization point", e.op_seq),
                ));
            }
        }
        None
    }

    fn progress(
        &self,
        st: &mut VState,
        line: Line,
        rec: &StepRecord,
        pid: Pid,
        seq: usize,
        sim: &Sim,
    ) -> Option<Violation> {
        let me = 1u64 << pid;
        let (flags, resets, what) = match line {
            Line::UbTakeReadDone
            | Line::UbTakeRereadDone
            | Line::S1TakeReadDone
            | Line::S1TakeRereadDone
            | Line::SbTakeReadInsertDone
            | Line::SbTakeRereadInsertDone => (&mut st.insert_since, true, "Insert"),
            Line::SbInsReadTakeDone | Line::SbInsRereadTakeDone => (&mut st.take_since, true, "Take"),
            _ => (&mut st.insert_since, false, ""),
        };
        if resets {
            let ok = !rec.new_iteration || *flags & me != 0;
            // An f&i read starts the bracket only at the top of the loop.
            if line != Line::UbTakeRereadDone {
                *flags &= !me;
            }
            if !ok {
                return Some(violation(
                    ViolationKind::LoopProgress,
                    Some(seq),
                    format!("p{pid} restarted its loop with no {what} completed since its previous read"),
                ));
            }
        }
        if rec.completed.is_some() {
            let all = (1u64 << sim.processes()) - 1;
            let req = sim.trace().ops.iter().rev().find(|o| o.pid == pid).map(|o| o.request);
            match req {
                Some(OpRequest::Insert(_)) => st.insert_since |= all & !me,
                Some(OpRequest::Take) => st.take_since |= all & !me,
                None => {}
            }
        }
        None
    }
}

type Finding = Option<(Vec<Pid>, Violation)>;

impl Fold for Validator {
    type State = VState;
    type Value = Finding;

    fn root(&mut self, sim: &Sim) -> Result<VState> {
        Ok(VState {
            tracker: LinTracker::new(self.algorithm, sim.processes()),
            spec: SpecState::new(),
            placed: 0,
            monitor: LemmaMonitor::new(),
            insert_since: 0,
            take_since: 0,
            retro: Vec::new(),
            violation: None,
        })
    }

    fn child(&mut self, parent: &VState, sim: &Sim, pid: Pid, rec: &StepRecord) -> Result<VState> {
        let mut st = parent.clone();
        if st.violation.is_none() {
            st.violation = self.check_step(&mut st, sim, pid, rec);
        }
        Ok(st)
    }

    fn cut(&mut self, st: &VState, _sim: &Sim) -> Result<Option<Finding>> {
        Ok(st.violation.clone().map(|v| Some((Vec::new(), v))))
    }

    fn leaf(&mut self, st: &VState, sim: &Sim, _truncated: bool) -> Result<Finding> {
        if !self.retroactive {
            return Ok(None);
        }
        let mut order = st.retro.clone();
        order.sort_by_key(|p| (p.point, p.rank));
        let trace = sim.trace();
        let mut state = SpecState::new();
        for p in &order {
            let req = request_of(trace, p).expect("placed operations exist");
            match spec_step(self.spec, &state, req, p.response) {
                Some(next) => state = next,
                None => {
                    let v = violation(
                        ViolationKind::Legality,
                        Some(p.point),
                        format!(
                            "{req}/{} illegal in state {:?} under {}",
                            p.response,
                            state.items(),
                            self.spec
                        ),
                    );
                    return Ok(Some((Vec::new(), v)));
                }
            }
        }
        Ok(None)
    }

    fn node(&mut self, _st: &VState, _sim: &Sim, children: Vec<(Pid, Finding)>) -> Result<Finding> {
        Ok(children.into_iter().find_map(|(pid, f)| {
            f.map(|(mut suffix, v)| {
                suffix.insert(0, pid);
                (suffix, v)
            })
        }))
    }

    fn decisive(&self, value: &Finding) -> bool {
        value.is_some()
    }
}

/// Result of checking every execution of a workload.
#[derive(Clone, Debug)]
pub struct ExhaustiveReport {
    pub stats: GraphStats,
    /// Most lemma evaluations along any single execution.
    pub lemma_checks: u64,
    /// First violating execution found, with the violation.
    pub violation: Option<(Trace, Violation)>,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks every execution of `workload` within `bounds`: the algorithm's
/// linearization rules (interval containment, legality under `spec`,
/// prefix-monotonicity, coverage, distinct points), the instrumented
/// lemmas and the loop-progress invariant.
///
/// Executions that reach identical configurations with identical checker
/// state are checked once.
pub fn validate_exhaustive(workload: &Workload, spec: Spec, bounds: &Bounds) -> Result<ExhaustiveReport> {
    let mut v = Validator::new(workload, spec)?;
    let (finding, stats) = fold_tree(Arc::new(workload.clone()), bounds, &[], &mut v)?;
    let violation = match finding {
        Some((schedule, viol)) => Some((run(workload, &schedule)?, viol)),
        None => None,
    };
    Ok(ExhaustiveReport {
        stats,
        lemma_checks: v.lemma_checks,
        violation,
    })
}

struct LinLeaves {
    spec: Spec,
}

impl Fold for LinLeaves {
    type State = ();
    type Value = Option<Vec<Pid>>;

    fn root(&mut self, _sim: &Sim) -> Result<()> {
        Ok(())
    }

    fn child(&mut self, _parent: &(), _sim: &Sim, _pid: Pid, _rec: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn leaf(&mut self, _st: &(), sim: &Sim, truncated: bool) -> Result<Self::Value> {
        if truncated {
            return Ok(None);
        }
        let h = History::from_trace(sim.trace())?;
        match linearizable(&h, self.spec, &SpecState::new(), LIN_CEILING) {
            LinVerdict::Linearizable(_) => Ok(None),
            LinVerdict::NotLinearizable => Ok(Some(Vec::new())),
            LinVerdict::Inconclusive { nodes } => Err(Error::Ceiling {
                ceiling: LIN_CEILING,
                nodes,
            }),
        }
    }

    fn node(&mut self, _st: &(), _sim: &Sim, children: Vec<(Pid, Self::Value)>) -> Result<Self::Value> {
        Ok(children.into_iter().find_map(|(pid, f)| {
            f.map(|mut suffix| {
                suffix.insert(0, pid);
                suffix
            })
        }))
    }

    fn decisive(&self, value: &Self::Value) -> bool {
        value.is_some()
    }
}

/// Search budget for one history's linearizability check.
const LIN_CEILING: u64 = 10_000_000;

/// Checks that the history of every maximal execution of `workload` is
/// linearizable under `spec`. Executions cut short by `bounds` are skipped. Returns the first non-linearizable trace.
pub fn linearizable_exhaustive(
    workload: &Workload,
    spec: Spec,
    bounds: &Bounds,
) -> Result<(Option<Trace>, GraphStats)> {
    let (found, stats) = fold_tree(Arc::new(workload.clone()), bounds, &[], &mut LinLeaves { spec })?;
    let trace = match found {
        Some(schedule) => Some(run(workload, &schedule)?),
        None => None,
    };
    Ok((trace, stats))
}

/// Every check of [`validate_exhaustive`] applied to one recorded trace,
/// followed by [`validate_trace`]. Returns the first violation.
pub fn check_trace(trace: &Trace, spec: Spec) -> Result<Option<Violation>> {
    let regenerated = replay_trace(trace)?;
    let workload = workload_of(trace)?;
    let mut v = Validator::new(&workload, spec)?;
    let schedule = regenerated.schedule();
    let bounds = Bounds {
        max_steps: schedule.len(),
        ..Bounds::default()
    };
    let (finding, _) = fold_tree(Arc::new(workload), &bounds, &schedule, &mut v)?;
    if let Some((_, viol)) = finding {
        return Ok(Some(viol));
    }
    Ok(validate_trace(&regenerated, spec)?.into_iter().next())
}
