use std::sync::Arc;

use slbag::algorithms::{AlgorithmId, ChooserPolicy, StepRecord};
use slbag::primitives::Pid;
use slbag::sim::{collect_traces, explore, fold_tree, run, Bounds, Fold, Sim, Trace, Visitor, Workload};
use slbag::slcheck::{counterexample_fixture, FixtureId};
use slbag::Error;

fn workload(alg: AlgorithmId, n: usize, b: usize, text: &str) -> Workload {
    Workload::parse(alg, n, b, ChooserPolicy::Smallest, text).unwrap()
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
}

/// Every schedule of at most `max_len` steps, kept when no process can
/// step afterwards.
fn brute_force_maximal(w: &Workload, max_len: usize) -> Vec<Vec<Pid>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<Pid>> = vec![Vec::new()];
    while let Some(s) = frontier.pop() {
        let trace_ok = run(w, &s).is_ok();
        if !trace_ok {
            continue;
        }
        let extendable: Vec<Pid> = (0..w.processes())
            .filter(|&p| {
                let mut t = s.clone();
                t.push(p);
                run(w, &t).is_ok()
            })
            .collect();
        if extendable.is_empty() {
            out.push(s);
        } else if s.len() < max_len {
            for p in extendable {
                let mut t = s.clone();
                t.push(p);
                frontier.push(t);
            }
        }
    }
    out
}

#[test]
fn two_single_step_operations_interleave_twice() {
    let w = workload(AlgorithmId::LiQueue, 2, 1, "p0:T;p1:T");
    let (traces, stats) = collect_traces(&w, &Bounds::default()).unwrap();
    assert_eq!(traces.len(), 2);
    assert_eq!(stats.truncated, 0);
    assert!(traces.iter().all(|(t, _)| t.len() == 2));
}

#[test]
fn independent_operations_give_multinomial_counts() {
    // Unbounded-bag Inserts take three steps whatever the schedule.
    let w = workload(AlgorithmId::UnboundedSl, 2, 1, "p0:I1;p1:I2");
    assert_eq!(
        collect_traces(&w, &Bounds::default()).unwrap().0.len() as u64,
        binomial(6, 3)
    );
    let w = workload(AlgorithmId::UnboundedSl, 3, 1, "p0:I1;p1:I2;p2:I3");
    assert_eq!(
        collect_traces(&w, &Bounds::default()).unwrap().0.len() as u64,
        binomial(9, 3) * binomial(6, 3)
    );
    let w = workload(AlgorithmId::LiQueue, 3, 1, "p0:I1;p1:I2;p2:I3");
    assert_eq!(
        collect_traces(&w, &Bounds::default()).unwrap().0.len() as u64,
        binomial(6, 2) * binomial(4, 2)
    );
}

#[test]
fn insert_and_take_match_a_brute_force_merge_enumeration() {
    let w = workload(AlgorithmId::UnboundedSl, 2, 1, "p0:I1;p1:T");
    let (traces, _) = collect_traces(&w, &Bounds::default()).unwrap();
    let mut explored: Vec<Vec<Pid>> = traces.iter().map(|(t, _)| t.schedule()).collect();
    let mut brute = brute_force_maximal(&w, 20);
    explored.sort();
    brute.sort();
    assert_eq!(explored, brute);
    // Runs where the Take completes in one pass: its four steps merge
    // with the Insert's three after the Insert's counter increment.
    let one_pass = traces
        .iter()
        .filter(|(t, _)| t.events.iter().filter(|e| e.pid == 1).count() == 4)
        .count() as u64;
    let take_first_read_after_inc = traces
        .iter()
        .filter(|(t, _)| t.events.iter().filter(|e| e.pid == 1).count() == 4)
        .all(|(t, _)| t.ops.iter().any(|o| o.pid == 1 && o.response.is_some()));
    assert!(take_first_read_after_inc);
    assert!(one_pass > 0 && one_pass <= binomial(7, 3));
}

struct PrefixClosed {
    checked: u64,
}

impl Visitor for PrefixClosed {
    type State = Trace;

    fn root(&mut self, sim: &Sim) -> slbag::Result<Trace> {
        assert!(sim.trace().is_empty());
        Ok(sim.trace().clone())
    }

    fn child(&mut self, parent: &Trace, sim: &Sim, pid: Pid, _rec: &StepRecord) -> slbag::Result<Trace> {
        let t = sim.trace();
        assert_eq!(t.len(), parent.len() + 1);
        assert_eq!(t.events[..parent.len()], parent.events[..]);
        assert_eq!(t.events.last().unwrap().pid, pid);
        self.checked += 1;
        Ok(t.clone())
    }

    fn leaf(&mut self, _: &Trace, _: &Sim, _: bool) -> slbag::Result<()> {
        Ok(())
    }
}

#[test]
fn traces_are_prefix_closed() {
    let w = workload(AlgorithmId::Sl1b, 1, 1, "p0:I1,I2;p1:T,T");
    let mut v = PrefixClosed { checked: 0 };
    let stats = explore(
        Arc::new(w),
        &Bounds {
            max_loop_iters: 2,
            ..Bounds::default()
        },
        &[],
        &mut v,
    )
    .unwrap();
    assert_eq!(v.checked + 1, stats.nodes);
}

struct MaxIteration;

impl Fold for MaxIteration {
    type State = u32;
    type Value = u32;

    fn root(&mut self, _: &Sim) -> slbag::Result<u32> {
        Ok(0)
    }

    fn child(&mut self, _: &u32, sim: &Sim, pid: Pid, _: &StepRecord) -> slbag::Result<u32> {
        Ok(sim.instance().program(pid).iteration())
    }

    fn leaf(&mut self, s: &u32, _: &Sim, _: bool) -> slbag::Result<u32> {
        Ok(*s)
    }

    fn node(&mut self, s: &u32, _: &Sim, children: Vec<(Pid, u32)>) -> slbag::Result<u32> {
        Ok(children.into_iter().map(|(_, v)| v).fold(*s, u32::max))
    }
}

#[test]
fn loop_bound_caps_iterations() {
    let w = workload(AlgorithmId::SlBb, 2, 1, "p0:I1,I2;p1:T;p2:T");
    let bounds = Bounds {
        max_loop_iters: 2,
        ..Bounds::default()
    };
    let (max, stats) = fold_tree(Arc::new(w), &bounds, &[], &mut MaxIteration).unwrap();
    // A process may enter iteration 3 but never takes a step inside it.
    assert_eq!(max, bounds.max_loop_iters + 1);
    assert!(stats.truncated > 0);
}

#[test]
fn node_ceiling_aborts_with_a_count() {
    let w = workload(AlgorithmId::UnboundedSl, 3, 1, "p0:I1,I2;p1:T;p2:T");
    let bounds = Bounds {
        node_ceiling: 1000,
        ..Bounds::default()
    };
    match collect_traces(&w, &bounds) {
        Err(Error::Ceiling { ceiling, nodes }) => {
            assert_eq!(ceiling, 1000);
            assert!(nodes > 1000);
        }
        other => panic!("expected a ceiling error, got {:?}", other.map(|r| r.1)),
    }
}

#[test]
fn run_is_deterministic() {
    let w = Workload::parse(
        AlgorithmId::SlBb,
        2,
        2,
        ChooserPolicy::Random(9),
        "p0:I1,I2,I3;p1:T;p2:T",
    )
    .unwrap();
    let schedule = [0, 0, 1, 0, 2, 0, 0, 1, 1, 0, 0, 2, 2, 1, 0, 0, 0, 0, 1, 2, 1, 2];
    let a = run(&w, &schedule).unwrap();
    let b = run(&w, &schedule).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert!(run(&workload(AlgorithmId::UnboundedSl, 2, 1, ""), &[])
        .unwrap()
        .is_empty());
    assert!(matches!(
        run(&workload(AlgorithmId::UnboundedSl, 2, 1, "p0:T"), &[1]),
        Err(Error::Usage(_))
    ));
}

#[test]
fn producer_then_consumer_alone() {
    let w = workload(AlgorithmId::UnboundedSl, 2, 1, "p0:I1;p1:T");
    let t = run(&w, &[0, 0, 0, 1, 1, 1, 1]).unwrap();
    let take = t.ops.iter().find(|o| o.pid == 1).unwrap();
    assert_eq!(take.response.unwrap().to_string(), "1");
}

#[test]
fn wait_free_fixture_leaves_second_taker_pending() {
    let f = counterexample_fixture(FixtureId::WaitFree).unwrap();
    let t = run(&f.workload, &f.alpha).unwrap();
    let tk2 = t.ops.iter().find(|o| o.pid == 2).unwrap();
    assert!(tk2.response.is_none());
    let read = t.events.iter().find(|e| e.pid == 2).unwrap();
    assert_eq!(read.line.token(), "wf.take.read_alloc");
    assert_eq!(read.response.value().and_then(|v| v.as_int()), Some(1));
}
