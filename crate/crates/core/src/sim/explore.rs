use std::sync::Arc;

use super::{Bounds, Sim, Trace, Workload};
use crate::algorithms::StepRecord;
use crate::error::{Error, Result};
use crate::primitives::Pid;

/// Callbacks driven by [`explore`]. Each tree node carries a visitor state
/// derived from its parent's, so per-edge checks are incremental.
pub trait Visitor {
    type State;

    fn root(&mut self, sim: &Sim) -> Result<Self::State>;

    /// Called after `pid` took step `rec`, producing the child `sim`.
    fn child(&mut self, parent: &Self::State, sim: &Sim, pid: Pid, rec: &StepRecord) -> Result<Self::State>;

    /// Called on every maximal node. `truncated` is set when the bounds,
    /// not the workload, ended the execution.
    fn leaf(&mut self, state: &Self::State, sim: &Sim, truncated: bool) -> Result<()>;

    /// Returning true stops the exploration early.
    fn done(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExploreStats {
    pub nodes: u64,
    /// Maximal executions visited (truncated ones included).
    pub traces: u64,
    pub truncated: u64,
    /// Maximum number of events in any visited trace.
    pub max_depth: usize,
}

/// Depth-first enumeration of every interleaving of `workload` within
/// `bounds`, starting after the scheduled `prefix`.
pub fn explore<V: Visitor>(
    workload: Arc<Workload>,
    bounds: &Bounds,
    prefix: &[Pid],
    visitor: &mut V,
) -> Result<ExploreStats> {
    let mut sim = Sim::new(workload)?;
    let mut state = visitor.root(&sim)?;
    for &pid in prefix {
        if pid >= sim.processes() || !sim.can_step(pid) {
            return Err(Error::usage(format!("prefix names process {pid}, which cannot step")));
        }
        let rec = sim.step(pid)?;
        state = visitor.child(&state, &sim, pid, &rec)?;
    }
    let mut stats = ExploreStats::default();
    dfs(sim, state, bounds, visitor, &mut stats)?;
    Ok(stats)
}

fn dfs<V: Visitor>(
    sim: Sim,
    state: V::State,
    bounds: &Bounds,
    visitor: &mut V,
    stats: &mut ExploreStats,
) -> Result<()> {
    stats.nodes += 1;
    if stats.nodes > bounds.node_ceiling {
        return Err(Error::Ceiling {
            ceiling: bounds.node_ceiling,
            nodes: stats.nodes,
        });
    }
    let enabled = sim.enabled(bounds);
    if enabled.is_empty() {
        let truncated = sim.truncated(bounds);
        stats.traces += 1;
        stats.truncated += truncated as u64;
        stats.max_depth = stats.max_depth.max(sim.trace().len());
        return visitor.leaf(&state, &sim, truncated);
    }
    let last = enabled.len() - 1;
    let mut sim = Some(sim);
    for (k, &pid) in enabled.iter().enumerate() {
        if visitor.done() {
            break;
        }
        let mut child = if k == last {
            sim.take().expect("parent still available")
        } else {
            sim.as_ref().expect("parent still available").clone()
        };
        let rec = child.step(pid)?;
        let cstate = visitor.child(&state, &child, pid, &rec)?;
        dfs(child, cstate, bounds, visitor, stats)?;
    }
    Ok(())
}

/// Collects every maximal trace. Intended for small trees.
pub fn collect_traces(workload: &Workload, bounds: &Bounds) -> Result<(Vec<(Trace, bool)>, ExploreStats)> {
    struct Collect(Vec<(Trace, bool)>);
    impl Visitor for Collect {
        type State = ();
        fn root(&mut self, _: &Sim) -> Result<()> {
            Ok(())
        }
        fn child(&mut self, _: &(), _: &Sim, _: Pid, _: &StepRecord) -> Result<()> {
            Ok(())
        }
        fn leaf(&mut self, _: &(), sim: &Sim, truncated: bool) -> Result<()> {
            self.0.push((sim.trace().clone(), truncated));
            Ok(())
        }
    }
    let mut c = Collect(Vec::new());
    let stats = explore(Arc::new(workload.clone()), bounds, &[], &mut c)?;
    Ok((c.0, stats))
}
