use std::sync::Arc;

use crate::algorithms::{OpResponse, StepRecord};
use crate::error::Result;
use crate::primitives::Pid;
use crate::sim::{fold_tree, Bounds, Fold, GraphStats, Sim, Workload};

/// Largest number of steps any completed operation took, per kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepBound {
    pub insert: u32,
    pub take: u32,
}

impl StepBound {
    fn max(self, o: StepBound) -> StepBound {
        StepBound {
            insert: self.insert.max(o.insert),
            take: self.take.max(o.take),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Steps {
    running: Vec<u32>,
    /// Step count of the operation completed by the edge into this node.
    completed: Option<(bool, u32)>,
}

struct Progress;

impl Fold for Progress {
    type State = Steps;
    type Value = StepBound;

    fn root(&mut self, sim: &Sim) -> Result<Steps> {
        Ok(Steps {
            running: vec![0; sim.processes()],
            completed: None,
        })
    }

    fn child(&mut self, parent: &Steps, _sim: &Sim, pid: Pid, rec: &StepRecord) -> Result<Steps> {
        let mut st = parent.clone();
        st.running[pid] += 1;
        st.completed = rec.completed.map(|r| {
            let insert = matches!(r, OpResponse::Ok | OpResponse::Full);
            (insert, std::mem::take(&mut st.running[pid]))
        });
        Ok(st)
    }

    fn leaf(&mut self, st: &Steps, _sim: &Sim, _truncated: bool) -> Result<StepBound> {
        Ok(own(st))
    }

    fn node(&mut self, st: &Steps, _sim: &Sim, children: Vec<(Pid, StepBound)>) -> Result<StepBound> {
        Ok(children.into_iter().fold(own(st), |acc, (_, v)| acc.max(v)))
    }
}

fn own(st: &Steps) -> StepBound {
    match st.completed {
        Some((true, k)) => StepBound { insert: k, take: 0 },
        Some((false, k)) => StepBound { insert: 0, take: k },
        None => StepBound::default(),
    }
}

/// Maximum per-operation step counts over every execution of `workload`.
pub fn wait_free_bound(workload: &Workload, bounds: &Bounds) -> Result<(StepBound, GraphStats)> {
    fold_tree(Arc::new(workload.clone()), bounds, &[], &mut Progress)
}
