//! Strong-linearizability tooling: executable linearization-point rules,
//! trace validation, a generic violation finder and the known
//! counterexample schedules.

mod finder;
mod fixtures;
mod progress;
mod rules;
mod tracker;
mod validate;
mod witness;

use std::fmt;

use crate::algorithms::OpResponse;
use crate::primitives::Pid;

pub use finder::{find_sl_violation, sl_frontier_at, FinderOutcome, FinderStats};
pub use fixtures::{counterexample_fixture, counterexample_fixtures, Fixture, FixtureId};
pub use progress::{wait_free_bound, StepBound};
pub use rules::assign_lin_points;
pub use tracker::LinTracker;
pub use validate::{
    check_trace, linearizable_exhaustive, validate_exhaustive, validate_trace, ExhaustiveReport, Violation,
    ViolationKind,
};
pub use witness::{SlWitness, WitnessMode};

/// Ordering among operations placed at the same step.
///
/// Fields: class, cell, process, sub-position. Successful Takes sort by
/// (cell, process) with a coupled Insert immediately before its Take;
/// failing Takes come after them and an uncoupled Insert last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rank(u8, u32, Pid, u8);

impl Rank {
    /// The only operation placed at its step.
    pub fn single() -> Self {
        Rank(0, 0, 0, 0)
    }

    pub fn coupled_insert(cell: u32, taker: Pid) -> Self {
        Rank(1, cell, taker, 0)
    }

    pub fn taker(cell: u32, pid: Pid) -> Self {
        Rank(1, cell, pid, 1)
    }

    pub fn deferred_empty(pid: Pid) -> Self {
        Rank(2, 0, pid, 0)
    }

    pub fn failing_take(pid: Pid) -> Self {
        Rank(2, 0, pid, 0)
    }

    pub fn last() -> Self {
        Rank(3, 0, 0, 0)
    }

    /// Cell of a successful Take placed with this rank.
    pub fn taker_cell(self) -> Option<u32> {
        (self.0 == 1 && self.3 == 1).then_some(self.1)
    }
}

/// One operation's linearization point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Placement {
    pub pid: Pid,
    pub op_seq: usize,
    pub response: OpResponse,
    /// Seq of the step at which the operation is linearized.
    pub point: usize,
    pub rank: Rank,
}

impl Placement {
    /// The operation and response, without the point.
    pub fn entry(&self) -> (Pid, usize, OpResponse) {
        (self.pid, self.op_seq, self.response)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}#{}/{}@{}", self.pid, self.op_seq, self.response, self.point)
    }
}
