//! Deterministic scheduling of algorithm instances: workloads, traces,
//! exhaustive exploration, memoized folds
//! over the execution tree and replay.

mod explore;
mod graph;
mod replay;
mod run;
mod trace;
mod workload;

pub use explore::{collect_traces, explore, ExploreStats, Visitor};
pub use graph::{fold_tree, Fold, GraphStats};
pub use replay::{replay, replay_trace, workload_of};
pub use run::{run, Bounds, Sim};
pub use trace::{Event, OpRecord, Trace};
pub use workload::Workload;
