//! End-to-end acceptance checks, one per criterion, run in order. Each
//! prints a single `A<k> pass|fail ...` line; any failure fails the target.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use slbag::algorithms::{AlgorithmId, ChooserPolicy, OpRequest, StepRecord};
use slbag::primitives::{Action, IndexSet, Memory, NativeMemory, Object, ObjectKind, Pid, Response, Value};
use slbag::sim::{explore, Bounds, Sim, Visitor, Workload};
use slbag::slcheck::{
    counterexample_fixture, find_sl_violation, linearizable_exhaustive, validate_exhaustive, wait_free_bound,
    FinderOutcome, FixtureId, StepBound, ViolationKind,
};
use slbag::specs::Spec;
use slbag::stress::{stress, StressConfig};

/// Largest step counts of one wait-free operation with one or two
/// consumers, measured independently below and frozen here.
const WF_BOUND_TWO: StepBound = StepBound { insert: 8, take: 5 };

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn criterion(label: &str, body: fn() -> Check) -> bool {
    let start = Instant::now();
    let result = body();
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(msg) => println!("{label} pass ({secs:.1}s) {msg}"),
        Err(msg) => println!("{label} fail ({secs:.1}s) {msg}"),
    }
    result.is_ok()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err(e: slbag::Error) -> String {
    e.to_string()
}

fn workload(alg: AlgorithmId, n: usize, b: usize, text: &str) -> Workload {
    Workload::parse(alg, n, b, ChooserPolicy::Smallest, text).unwrap()
}

fn iters(k: u32) -> Bounds {
    Bounds {
        max_loop_iters: k,
        ..Bounds::default()
    }
}

/// Exhaustive validation followed by the violation search.
fn validate_and_search(w: &Workload, spec: Spec, bounds: &Bounds, limit: Duration) -> Check {
    let start = Instant::now();
    let report = validate_exhaustive(w, spec, bounds).map_err(err)?;
    if let Some((t, v)) = &report.violation {
        return Err(format!("{v}\n{}", t.to_text()));
    }
    ensure!(
        report.stats.truncated > 0 || report.stats.traces > 0,
        "nothing explored"
    );
    let (outcome, stats) = find_sl_violation(w, spec, bounds, &[]).map_err(err)?;
    if let FinderOutcome::Violation(wit) = outcome {
        return Err(format!("unexpected witness {}", wit.summary()));
    }
    let spent = start.elapsed();
    ensure!(spent < limit, "took {spent:?}, limit {limit:?}");
    Ok(format!(
        "{} states validated, {} searched, lemma checks {}",
        report.stats.states, stats.graph.states, report.lemma_checks
    ))
}

fn a1_li_queue_counterexample() -> Check {
    let start = Instant::now();
    let w = workload(AlgorithmId::LiQueue, 3, 1, "p0:I1;p1:I2;p2:T");
    let (outcome, _) = find_sl_violation(&w, Spec::Bag, &Bounds::default(), &[]).map_err(err)?;
    let FinderOutcome::Violation(wit) = outcome else {
        return Err("no violation found".into());
    };
    let fixture = counterexample_fixture(FixtureId::LiQueue).map_err(err)?;
    ensure!(
        wit.alpha == fixture.alpha,
        "alpha {:?} differs from {:?}",
        wit.alpha,
        fixture.alpha
    );
    ensure!(wit.verify().map_err(err)?, "witness does not verify");
    ensure!(start.elapsed() < Duration::from_secs(60), "too slow");
    Ok(format!("alpha {:?}", wit.alpha))
}

fn a2_unbounded_is_strongly_linearizable() -> Check {
    let w = workload(AlgorithmId::UnboundedSl, 3, 1, "p0:I1,I2;p1:T;p2:T");
    validate_and_search(&w, Spec::Bag, &iters(3), Duration::from_secs(600))
}

fn a3_unbounded_is_a_queue_but_not_strongly() -> Check {
    let w = workload(AlgorithmId::UnboundedSl, 3, 1, "p0:I1,I2;p1:T;p2:T");
    let (bad, stats) = linearizable_exhaustive(&w, Spec::Queue, &iters(3)).map_err(err)?;
    if let Some(t) = bad {
        return Err(format!("not a queue:\n{}", t.to_text()));
    }
    let five = workload(AlgorithmId::UnboundedSl, 5, 1, "p0:I1;p1:I2;p2:T;p3:T;p4:T");
    let (outcome, _) = find_sl_violation(&five, Spec::Queue, &Bounds::default(), &[]).map_err(err)?;
    let FinderOutcome::Violation(wit) = outcome else {
        return Err("no queue violation found with five processes".into());
    };
    ensure!(wit.verify().map_err(err)?, "witness does not verify");
    let fixture = counterexample_fixture(FixtureId::UnboundedQueue).map_err(err)?;
    ensure!(
        fixture.witness().map_err(err)?.verify().map_err(err)?,
        "fixture witness does not verify"
    );
    Ok(format!(
        "{} traces linearizable as a queue, witness {}",
        stats.traces,
        wit.summary()
    ))
}

/// Counts steps of every operation along every execution, without
/// sharing work between executions.
struct MaxSteps {
    ops: Vec<Vec<OpRequest>>,
    best: StepBound,
}

impl Visitor for MaxSteps {
    type State = Vec<u32>;

    fn root(&mut self, sim: &Sim) -> slbag::Result<Vec<u32>> {
        Ok(vec![0; sim.processes()])
    }

    fn child(&mut self, parent: &Vec<u32>, sim: &Sim, pid: Pid, rec: &StepRecord) -> slbag::Result<Vec<u32>> {
        let mut running = parent.clone();
        running[pid] += 1;
        if rec.completed.is_some() {
            let op_seq = sim.trace().events.last().unwrap().op_seq;
            let k = std::mem::take(&mut running[pid]);
            match self.ops[pid][op_seq] {
                OpRequest::Insert(_) => self.best.insert = self.best.insert.max(k),
                OpRequest::Take => self.best.take = self.best.take.max(k),
            }
        }
        Ok(running)
    }

    fn leaf(&mut self, _: &Vec<u32>, _: &Sim, _: bool) -> slbag::Result<()> {
        Ok(())
    }
}

fn a4_wait_free_bag() -> Check {
    let w = workload(AlgorithmId::Wf1b, 2, 1, "p0:I1,I2;p1:T;p2:T");
    let bounds = Bounds::default();
    let (bad, lin) = linearizable_exhaustive(&w, Spec::BoundedBag(1), &bounds).map_err(err)?;
    if let Some(t) = bad {
        return Err(format!("not a 1-bounded bag:\n{}", t.to_text()));
    }
    let report = validate_exhaustive(&w, Spec::BoundedBag(1), &bounds).map_err(err)?;
    if let Some((t, v)) = &report.violation {
        return Err(format!("{v}\n{}", t.to_text()));
    }
    let (bound, _) = wait_free_bound(&w, &bounds).map_err(err)?;
    let mut oracle = MaxSteps {
        ops: w.ops.clone(),
        best: StepBound::default(),
    };
    explore(Arc::new(w.clone()), &bounds, &[], &mut oracle).map_err(err)?;
    ensure!(
        bound == oracle.best,
        "memoized bound {bound:?} but direct count {:?}",
        oracle.best
    );
    ensure!(
        bound.insert <= WF_BOUND_TWO.insert && bound.take <= WF_BOUND_TWO.take,
        "{bound:?} exceeds {WF_BOUND_TWO:?}"
    );
    let fixture = counterexample_fixture(FixtureId::WaitFree).map_err(err)?;
    ensure!(
        fixture.witness().map_err(err)?.verify().map_err(err)?,
        "fixture witness does not verify"
    );
    Ok(format!(
        "{} traces linearizable, steps {}/{}, lemma checks {}",
        lin.traces, bound.insert, bound.take, report.lemma_checks
    ))
}

fn a5_one_bounded_is_strongly_linearizable() -> Check {
    let w = workload(AlgorithmId::Sl1b, 2, 1, "p0:I1,I2;p1:T;p2:T");
    validate_and_search(&w, Spec::BoundedBag(1), &iters(2), Duration::from_secs(600))
}

fn a6_b_bounded_is_strongly_linearizable() -> Check {
    let start = Instant::now();
    let one = workload(AlgorithmId::SlBb, 2, 1, "p0:I1,I2;p1:T;p2:T");
    let a = validate_and_search(&one, Spec::BoundedBag(1), &iters(2), Duration::from_secs(1800))?;
    let two = workload(AlgorithmId::SlBb, 2, 2, "p0:I1,I2,I3;p1:T;p2:T");
    let b = validate_and_search(&two, Spec::BoundedBag(2), &iters(2), Duration::from_secs(1800))?;
    ensure!(
        start.elapsed() < Duration::from_secs(1800),
        "took {:?}",
        start.elapsed()
    );
    Ok(format!("b=1: {a}; b=2: {b}"))
}

/// Reference semantics that recompute each response from the whole
/// history of the object.
fn reference(kind: ObjectKind, history: &[(Action, Pid)]) -> Response {
    let (last, before) = history.split_last().unwrap();
    let (action, actor) = *last;
    match (kind, action) {
        (ObjectKind::Register | ObjectKind::SetRegister, Action::Read) => {
            let init = if kind == ObjectKind::Register {
                Value::Bottom
            } else {
                Value::Set(IndexSet::empty())
            };
            let v = before
                .iter()
                .rev()
                .find_map(|(a, _)| match a {
                    Action::Write(v) => Some(*v),
                    _ => None,
                })
                .unwrap_or(init);
            Response::Value(v)
        }
        (_, Action::Write(_) | Action::Reset | Action::DWrite) => Response::Ack,
        (_, Action::TestAndSet) | (ObjectKind::ResettableTestAndSet, Action::Read) => {
            let since_reset = before.iter().rev().take_while(|(a, _)| *a != Action::Reset);
            let set = since_reset.clone().any(|(a, _)| *a == Action::TestAndSet);
            Response::Bit(set as u8)
        }
        (_, Action::FetchAndIncrement) | (ObjectKind::FetchAndIncrement, Action::Read) => {
            Response::Count(before.iter().filter(|(a, _)| *a == Action::FetchAndIncrement).count() as u64)
        }
        (ObjectKind::AbaRegister, Action::DRead) => {
            let previous = before.iter().rposition(|(a, p)| *a == Action::DRead && *p == actor);
            let changed = previous.is_some_and(|i| before[i + 1..].iter().any(|(a, _)| *a == Action::DWrite));
            Response::Flag(changed)
        }
        (k, a) => panic!("no reference for {a:?} on {k:?}"),
    }
}

fn alphabet(kind: ObjectKind) -> Vec<(Action, Pid)> {
    let actions = match kind {
        ObjectKind::Register => vec![
            Action::Read,
            Action::Write(Value::Bottom),
            Action::Write(Value::Int(1)),
            Action::Write(Value::Int(2)),
        ],
        ObjectKind::SetRegister => vec![
            Action::Read,
            Action::Write(Value::Set(IndexSet::empty())),
            Action::Write(Value::Set([1].into_iter().collect())),
            Action::Write(Value::Set([1, 2].into_iter().collect())),
        ],
        ObjectKind::TestAndSet => vec![Action::TestAndSet],
        ObjectKind::ResettableTestAndSet => vec![Action::TestAndSet, Action::Reset, Action::Read],
        ObjectKind::FetchAndIncrement => vec![Action::FetchAndIncrement, Action::Read],
        ObjectKind::AbaRegister => vec![Action::DWrite, Action::DRead],
    };
    actions.into_iter().flat_map(|a| [(a, 0), (a, 1)]).collect()
}

fn a7_primitives_match_reference() -> Check {
    let kinds = [
        ObjectKind::Register,
        ObjectKind::SetRegister,
        ObjectKind::TestAndSet,
        ObjectKind::ResettableTestAndSet,
        ObjectKind::FetchAndIncrement,
        ObjectKind::AbaRegister,
    ];
    let mut sequences = 0u64;
    for kind in kinds {
        let alpha = alphabet(kind);
        let mut layout = Memory::new(2);
        let obj = layout.add_scalar("X", kind, None);
        // Every sequence of length at most six, by odometer.
        for len in 1..=6u32 {
            let total = alpha.len().pow(len);
            for code in 0..total {
                let mut c = code;
                let seq: Vec<(Action, Pid)> = (0..len)
                    .map(|_| {
                        let a = alpha[c % alpha.len()];
                        c /= alpha.len();
                        a
                    })
                    .collect();
                let mut model = Object::new(kind, 2);
                let mut virt = layout.clone();
                let native = NativeMemory::from_layout(&layout, 1).map_err(err)?;
                for i in 0..seq.len() {
                    let (a, p) = seq[i];
                    let want = reference(kind, &seq[..=i]);
                    let got = model.apply(&a, p).map_err(err)?;
                    let got_virt = virt.apply(obj, &a, p).map_err(err)?;
                    let got_native = native.apply(obj, &a, p).map_err(err)?;
                    ensure!(
                        got == want && got_virt == want && got_native == want,
                        "{kind:?} {seq:?} step {i}: reference {want}, object {got}, memory {got_virt}, native {got_native}"
                    );
                }
                sequences += 1;
            }
        }
        let every = [
            Action::Read,
            Action::Write(Value::Int(1)),
            Action::TestAndSet,
            Action::Reset,
            Action::FetchAndIncrement,
            Action::DWrite,
            Action::DRead,
        ];
        for a in every.iter().filter(|a| !kind.allows(a)) {
            ensure!(
                Object::new(kind, 2).apply(a, 0).is_err(),
                "{kind:?} accepted {}",
                a.name()
            );
        }
    }
    Ok(format!("{sequences} sequences agree"))
}

fn a8_lemmas_hold() -> Check {
    let cases = [
        (
            workload(AlgorithmId::UnboundedSl, 3, 1, "p0:I1,I2;p1:T;p2:T"),
            Spec::Bag,
            iters(3),
        ),
        (
            workload(AlgorithmId::Wf1b, 2, 1, "p0:I1,I2;p1:T;p2:T"),
            Spec::BoundedBag(1),
            Bounds::default(),
        ),
        (
            workload(AlgorithmId::Sl1b, 2, 1, "p0:I1,I2;p1:T;p2:T"),
            Spec::BoundedBag(1),
            iters(2),
        ),
        (
            workload(AlgorithmId::SlBb, 2, 1, "p0:I1,I2;p1:T;p2:T"),
            Spec::BoundedBag(1),
            iters(2),
        ),
        (
            workload(AlgorithmId::SlBb, 2, 2, "p0:I1,I2,I3;p1:T;p2:T"),
            Spec::BoundedBag(2),
            iters(2),
        ),
    ];
    let mut checks = Vec::new();
    for (w, spec, bounds) in cases {
        let report = validate_exhaustive(&w, spec, &bounds).map_err(err)?;
        if let Some((_, v)) = &report.violation {
            ensure!(v.kind != ViolationKind::Lemma, "{} lemma failed: {v}", w.algorithm);
            return Err(format!("{}: {v}", w.algorithm));
        }
        // The unbounded bag has no instrumented lemmas.
        ensure!(
            report.lemma_checks > 0 || w.algorithm == AlgorithmId::UnboundedSl,
            "{} evaluated no lemmas",
            w.algorithm
        );
        checks.push(format!("{}={}", w.algorithm, report.lemma_checks));
    }
    Ok(format!("lemma checks {}", checks.join(" ")))
}

fn a9_native_stress() -> Check {
    let start = Instant::now();
    let mut lines = Vec::new();
    for (alg, n, b) in [(AlgorithmId::UnboundedSl, 4, 1), (AlgorithmId::SlBb, 3, 2)] {
        let report = stress(&StressConfig::new(alg, n, b, 10_000, 7)).map_err(err)?;
        ensure!(report.passed(), "{alg}: {:?}", report.failures);
        ensure!(report.ops >= 10_000, "{alg}: only {} operations", report.ops);
        lines.push(format!(
            "{alg} {} ops in {} windows",
            report.ops, report.windows_checked
        ));
    }
    ensure!(start.elapsed() < Duration::from_secs(300), "took {:?}", start.elapsed());
    Ok(lines.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("A1", a1_li_queue_counterexample),
        ("A2", a2_unbounded_is_strongly_linearizable),
        ("A3", a3_unbounded_is_a_queue_but_not_strongly),
        ("A4", a4_wait_free_bag),
        ("A5", a5_one_bounded_is_strongly_linearizable),
        ("A6", a6_b_bounded_is_strongly_linearizable),
        ("A7", a7_primitives_match_reference),
        ("A8", a8_lemmas_hold),
        ("A9", a9_native_stress),
    ];
    let mut failed = 0;
    for (label, body) in criteria {
        if !criterion(label, body) {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
