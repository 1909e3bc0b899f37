//! The three known counterexample schedules, expressed as a prefix α and
//! branches continuing it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::witness::{SlWitness, WitnessMode};
use crate::algorithms::{AlgorithmId, ChooserPolicy};
use crate::error::{Error, Result};
use crate::primitives::Pid;
use crate::sim::{Bounds, Sim, Workload};
use crate::specs::Spec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FixtureId {
    /// The fetch&inc queue, read as a bag.
    LiQueue,
    /// The unbounded bag, read as a queue.
    UnboundedQueue,
    /// The wait-free 1-bounded bag.
    WaitFree,
}

impl FixtureId {
    pub const ALL: [FixtureId; 3] = [FixtureId::LiQueue, FixtureId::UnboundedQueue, FixtureId::WaitFree];

    pub fn token(self) -> &'static str {
        match self {
            FixtureId::LiQueue => "s3",
            FixtureId::UnboundedQueue => "s41",
            FixtureId::WaitFree => "s52",
        }
    }
}

impl fmt::Display for FixtureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FixtureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureId::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| Error::usage(format!("unknown counterexample `{s}` (expected s3, s41 or s52)")))
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub id: FixtureId,
    pub workload: Workload,
    pub spec: Spec,
    pub alpha: Vec<Pid>,
    pub branches: Vec<Vec<Pid>>,
}

impl Fixture {
    /// The fixture as a checkable witness.
    pub fn witness(&self) -> Result<SlWitness> {
        SlWitness::from_branches(
            &self.workload,
            self.spec,
            &Bounds::default(),
            &self.alpha,
            self.branches.clone(),
            WitnessMode::Plain,
        )
    }
}

/// Builds schedules operation by operation.
struct Script {
    sim: Sim,
    steps: Vec<Pid>,
}

impl Script {
    fn new(workload: &Workload) -> Result<Self> {
        Ok(Script {
            sim: Sim::new(Arc::new(workload.clone()))?,
            steps: Vec::new(),
        })
    }

    fn step(&mut self, pid: Pid, k: usize) -> Result<&mut Self> {
        for _ in 0..k {
            self.sim.step(pid)?;
            self.steps.push(pid);
        }
        Ok(self)
    }

    /// Runs `pid` until its current (or next) operation completes.
    fn finish(&mut self, pid: Pid) -> Result<&mut Self> {
        loop {
            self.steps.push(pid);
            if self.sim.step(pid)?.completed.is_some() {
                return Ok(self);
            }
        }
    }

    /// The steps taken after the first `from`.
    fn since(&self, from: usize) -> Vec<Pid> {
        self.steps[from..].to_vec()
    }
}

fn li_queue() -> Result<Fixture> {
    let workload = Workload::parse(AlgorithmId::LiQueue, 3, 1, ChooserPolicy::Smallest, "p0:I1;p1:I2;p2:T")?;
    // Both inserters reserve slots 0 and 1; the taker scans both empty
    // slots once, re-reads the counter and reads slot 0 again; then the
    // first inserter fills slot 0.
    let mut s = Script::new(&workload)?;
    s.step(0, 1)?.step(1, 1)?.step(2, 5)?.step(0, 1)?;
    let alpha = s.steps.clone();
    let mut one = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    one.finish(2)?;
    let mut two = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    two.finish(1)?.finish(2)?;
    let n = alpha.len();
    Ok(Fixture {
        id: FixtureId::LiQueue,
        workload,
        spec: Spec::Bag,
        branches: vec![one.since(n), two.since(n)],
        alpha,
    })
}

fn unbounded_queue() -> Result<Fixture> {
    let workload = Workload::parse(
        AlgorithmId::UnboundedSl,
        5,
        1,
        ChooserPolicy::Smallest,
        "p0:I1;p1:I2;p2:T;p3:T;p4:T",
    )?;
    let mut s = Script::new(&workload)?;
    s.step(0, 1)?.step(1, 1)?.step(2, 3)?.step(0, 2)?.step(1, 2)?;
    let alpha = s.steps.clone();
    let n = alpha.len();
    let mut one = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    one.finish(2)?;
    let mut two = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    two.finish(3)?.finish(4)?;
    Ok(Fixture {
        id: FixtureId::UnboundedQueue,
        workload,
        spec: Spec::Queue,
        branches: vec![one.since(n), two.since(n)],
        alpha,
    })
}

fn wait_free() -> Result<Fixture> {
    let workload = Workload::parse(
        AlgorithmId::Wf1b,
        3,
        1,
        ChooserPolicy::Scripted(vec![1, 2, 1]),
        "p0:I1,I2,I3;p1:T;p2:T;p3:T",
    )?;
    let mut s = Script::new(&workload)?;
    s.finish(0)?.finish(1)?.step(2, 1)?.finish(0)?;
    let alpha = s.steps.clone();
    let n = alpha.len();
    let mut one = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    one.finish(2)?;
    let mut two = Script {
        sim: s.sim.clone(),
        steps: alpha.clone(),
    };
    two.finish(3)?.finish(0)?.finish(2)?;
    Ok(Fixture {
        id: FixtureId::WaitFree,
        workload,
        spec: Spec::BoundedBag(1),
        branches: vec![one.since(n), two.since(n)],
        alpha,
    })
}

pub fn counterexample_fixture(id: FixtureId) -> Result<Fixture> {
    match id {
        FixtureId::LiQueue => li_queue(),
        FixtureId::UnboundedQueue => unbounded_queue(),
        FixtureId::WaitFree => wait_free(),
    }
}

pub fn counterexample_fixtures() -> Result<Vec<Fixture>> {
    FixtureId::ALL.into_iter().map(counterexample_fixture).collect()
}
