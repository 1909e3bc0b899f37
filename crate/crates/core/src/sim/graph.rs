use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Arc;

use super::{Bounds, Sim, Workload};
use crate::algorithms::StepRecord;
use crate::error::{Error, Result};
use crate::primitives::Pid;

/// A bottom-up computation over the execution tree of a workload.
///
/// Every tree node carries a downward `State`. Nodes whose simulator
/// fingerprint and state coincide root identical subtrees, so their
/// `Value` is computed once and reused.
pub trait Fold {
    type State: Clone + Eq + Hash;
    type Value: Clone;

    fn root(&mut self, sim: &Sim) -> Result<Self::State>;

    fn child(&mut self, parent: &Self::State, sim: &Sim, pid: Pid, rec: &StepRecord) -> Result<Self::State>;

    fn leaf(&mut self, state: &Self::State, sim: &Sim, truncated: bool) -> Result<Self::Value>;

    /// Combines the children's values, listed in ascending process order.
    fn node(&mut self, state: &Self::State, sim: &Sim, children: Vec<(Pid, Self::Value)>) -> Result<Self::Value>;

    /// Ends the exploration below this node with the returned value.
    fn cut(&mut self, _state: &Self::State, _sim: &Sim) -> Result<Option<Self::Value>> {
        Ok(None)
    }

    /// A value that makes the remaining siblings irrelevant.
    fn decisive(&self, _value: &Self::Value) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphStats {
    /// Distinct (fingerprint, state) pairs expanded.
    pub states: u64,
    /// Tree nodes represented, counting shared subtrees once per occurrence.
    pub nodes: u64,
    /// Maximal executions represented.
    pub traces: u64,
    pub truncated: u64,
    pub max_depth: usize,
}

#[derive(Clone, Copy, Default)]
struct Counts {
    nodes: u64,
    traces: u64,
    truncated: u64,
}

struct Walk<'a, F: Fold> {
    fold: &'a mut F,
    bounds: Bounds,
    memo: HashMap<(u128, F::State), (F::Value, Counts)>,
    stats: GraphStats,
}

/// Evaluates `fold` over every execution of `workload` within `bounds`,
/// starting after the scheduled `prefix`. Returns the root value.
pub fn fold_tree<F: Fold>(
    workload: Arc<Workload>,
    bounds: &Bounds,
    prefix: &[Pid],
    fold: &mut F,
) -> Result<(F::Value, GraphStats)> {
    let mut sim = Sim::new(workload)?;
    let mut state = fold.root(&sim)?;
    for &pid in prefix {
        if pid >= sim.processes() || !sim.can_step(pid) {
            return Err(Error::usage(format!("prefix names process {pid}, which cannot step")));
        }
        let rec = sim.step(pid)?;
        state = fold.child(&state, &sim, pid, &rec)?;
    }
    let mut walk = Walk {
        fold,
        bounds: *bounds,
        memo: HashMap::new(),
        stats: GraphStats::default(),
    };
    let (value, counts) = walk.visit(sim, state)?;
    let mut stats = walk.stats;
    stats.nodes = counts.nodes;
    stats.traces = counts.traces;
    stats.truncated = counts.truncated;
    Ok((value, stats))
}

impl<F: Fold> Walk<'_, F> {
    fn visit(&mut self, sim: Sim, state: F::State) -> Result<(F::Value, Counts)> {
        let key = (sim.fingerprint(), state);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        self.stats.states += 1;
        if self.stats.states > self.bounds.node_ceiling {
            return Err(Error::Ceiling {
                ceiling: self.bounds.node_ceiling,
                nodes: self.stats.states,
            });
        }
        let state = key.1.clone();
        let enabled = sim.enabled(&self.bounds);
        let result = if let Some(value) = self.fold.cut(&state, &sim)? {
            (
                value,
                Counts {
                    nodes: 1,
                    traces: 1,
                    truncated: 0,
                },
            )
        } else if enabled.is_empty() {
            let truncated = sim.truncated(&self.bounds);
            self.stats.max_depth = self.stats.max_depth.max(sim.trace().len());
            let value = self.fold.leaf(&state, &sim, truncated)?;
            let counts = Counts {
                nodes: 1,
                traces: 1,
                truncated: truncated as u64,
            };
            (value, counts)
        } else {
            let mut children = Vec::with_capacity(enabled.len());
            let mut counts = Counts {
                nodes: 1,
                ..Counts::default()
            };
            for &pid in &enabled {
                let mut child = sim.clone();
                let rec = child.step(pid)?;
                let cstate = self.fold.child(&state, &child, pid, &rec)?;
                let (v, c) = self.visit(child, cstate)?;
                counts.nodes = counts.nodes.saturating_add(c.nodes);
                counts.traces = counts.traces.saturating_add(c.traces);
                counts.truncated = counts.truncated.saturating_add(c.truncated);
                let stop = self.fold.decisive(&v);
                children.push((pid, v));
                if stop {
                    break;
                }
            }
            (self.fold.node(&state, &sim, children)?, counts)
        };
        self.memo.insert(key, result.clone());
        Ok(result)
    }
}
