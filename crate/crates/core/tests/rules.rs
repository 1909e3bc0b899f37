//! The online tracker and the offline rule assignment must agree on every
//! execution, and the offline assignment must pass validation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slbag::algorithms::{AlgorithmId, ChooserPolicy, StepRecord};
use slbag::primitives::Pid;
use slbag::sim::{explore, Bounds, Sim, Visitor, Workload};
use slbag::slcheck::{assign_lin_points, validate_trace, LinTracker, Placement};
use slbag::specs::Spec;

struct Agree {
    spec: Spec,
    leaves: u64,
}

impl Visitor for Agree {
    type State = (LinTracker, Vec<Placement>);

    fn root(&mut self, sim: &Sim) -> slbag::Result<Self::State> {
        Ok((LinTracker::new(sim.workload().algorithm, sim.processes()), Vec::new()))
    }

    fn child(&mut self, parent: &Self::State, sim: &Sim, _pid: Pid, rec: &StepRecord) -> slbag::Result<Self::State> {
        let (mut tracker, mut placed) = parent.clone();
        let e = sim.trace().events.last().unwrap();
        placed.extend(tracker.feed(e, rec.completed));
        Ok((tracker, placed))
    }

    fn leaf(&mut self, state: &Self::State, sim: &Sim, _truncated: bool) -> slbag::Result<()> {
        self.leaves += 1;
        let mut online = state.1.clone();
        online.sort_by_key(|p| (p.point, p.rank));
        let offline = assign_lin_points(sim.trace())?;
        assert_eq!(online, offline, "schedule {:?}", sim.trace().schedule());
        let violations = validate_trace(sim.trace(), self.spec)?;
        assert!(violations.is_empty(), "{violations:?} on {:?}", sim.trace().schedule());
        Ok(())
    }
}

fn setup(alg: AlgorithmId, n: usize, b: usize, workload: &str, iters: u32) -> (Workload, Agree, Bounds) {
    let w = Workload::parse(alg, n, b, ChooserPolicy::Smallest, workload).unwrap();
    let spec = match alg.capacity(b) {
        Some(c) => Spec::BoundedBag(c),
        None => Spec::Bag,
    };
    let bounds = Bounds {
        max_loop_iters: iters,
        ..Bounds::default()
    };
    (w, Agree { spec, leaves: 0 }, bounds)
}

fn agree(alg: AlgorithmId, n: usize, b: usize, workload: &str, iters: u32) -> u64 {
    let (w, mut v, bounds) = setup(alg, n, b, workload, iters);
    explore(Arc::new(w), &bounds, &[], &mut v).unwrap();
    v.leaves
}

/// Same comparison along `runs` random schedules.
fn agree_sampled(alg: AlgorithmId, n: usize, b: usize, workload: &str, iters: u32, runs: usize) {
    let (w, mut v, bounds) = setup(alg, n, b, workload, iters);
    let w = Arc::new(w);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..runs {
        let mut sim = Sim::new(w.clone()).unwrap();
        let mut state = v.root(&sim).unwrap();
        loop {
            let enabled = sim.enabled(&bounds);
            if enabled.is_empty() {
                break;
            }
            let pid = enabled[rng.gen_range(0..enabled.len())];
            let rec = sim.step(pid).unwrap();
            state = v.child(&state, &sim, pid, &rec).unwrap();
        }
        v.leaf(&state, &sim, sim.truncated(&bounds)).unwrap();
    }
}

#[test]
fn li_queue_rules_agree() {
    assert_eq!(agree(AlgorithmId::LiQueue, 3, 1, "p0:I1;p1:I2;p2:T", 3), 390);
}

#[test]
fn unbounded_rules_agree() {
    assert!(agree(AlgorithmId::UnboundedSl, 3, 1, "p0:I1;p1:T;p2:T", 2) > 100);
    assert!(agree(AlgorithmId::UnboundedSl, 2, 1, "p0:I1,T;p1:I2,T", 2) > 100);
    agree_sampled(AlgorithmId::UnboundedSl, 3, 1, "p0:I1,I2;p1:T;p2:T", 3, 3000);
}

#[test]
fn wait_free_rules_agree() {
    assert!(agree(AlgorithmId::Wf1b, 2, 1, "p0:I1,I2;p1:T", 3) > 100);
    assert!(agree(AlgorithmId::Wf1b, 2, 1, "p0:I1;p1:T;p2:T", 3) > 100);
    agree_sampled(AlgorithmId::Wf1b, 3, 1, "p0:I1,I2,I3;p1:T;p2:T;p3:T", 3, 3000);
}

#[test]
fn one_bounded_rules_agree() {
    assert!(agree(AlgorithmId::Sl1b, 2, 1, "p0:I1,I2;p1:T", 2) > 100);
    assert!(agree(AlgorithmId::Sl1b, 1, 1, "p0:I1,I2;p1:T,T", 1) > 100);
    agree_sampled(AlgorithmId::Sl1b, 2, 1, "p0:I1,I2;p1:T;p2:T", 2, 3000);
}

#[test]
fn b_bounded_rules_agree() {
    assert!(agree(AlgorithmId::SlBb, 1, 1, "p0:I1,I2;p1:T", 2) > 100);
    assert!(agree(AlgorithmId::SlBb, 1, 2, "p0:I1,I2;p1:T", 1) > 100);
    agree_sampled(AlgorithmId::SlBb, 2, 1, "p0:I1,I2;p1:T;p2:T", 2, 3000);
    agree_sampled(AlgorithmId::SlBb, 2, 2, "p0:I1,I2,I3;p1:T;p2:T", 2, 3000);
}
