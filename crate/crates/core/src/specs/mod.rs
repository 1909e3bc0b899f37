//! Sequential specifications of the bag, the b-bounded bag and the queue,
//! plus a linearizability checker for histories over them.
//!
//! Bag Take is nondeterministic: [`spec_apply`] returns every allowed
//! outcome and the checkers branch over them.

mod history;
mod lin;

use std::fmt;
use std::str::FromStr;

use crate::algorithms::{OpRequest, OpResponse};
use crate::error::{Error, Result};

pub use history::{HistOp, History};
pub use lin::{all_linearizations, linearizable, LinEntry, LinVerdict, Linearization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spec {
    Bag,
    /// Bag holding at most this many elements.
    BoundedBag(usize),
    /// FIFO queue: Insert enqueues, Take dequeues.
    Queue,
}

impl Spec {
    /// Parses `bag`, `bbag` or `queue`; `bbag` takes its capacity from `b`.
    pub fn parse(token: &str, b: usize) -> Result<Self> {
        match token {
            "bag" => Ok(Spec::Bag),
            "bbag" if b > 0 => Ok(Spec::BoundedBag(b)),
            "queue" => Ok(Spec::Queue),
            _ => Err(Error::usage(format!(
                "unknown spec `{token}` (expected bag, bbag or queue)"
            ))),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Spec::Bag => "bag",
            Spec::BoundedBag(_) => "bbag",
            Spec::Queue => "queue",
        }
    }
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spec::BoundedBag(b) => write!(f, "bbag(b={b})"),
            s => f.write_str(s.token()),
        }
    }
}

impl FromStr for Spec {
    type Err = Error;

    /// `bag`, `queue` or `bbag:<b>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("bbag:") {
            Some(b) => b
                .parse()
                .ok()
                .filter(|&b| b > 0)
                .map(Spec::BoundedBag)
                .ok_or_else(|| Error::usage(format!("bad capacity in `{s}`"))),
            None => Spec::parse(s, 0),
        }
    }
}

/// Abstract object state: the multiset (kept sorted) or the queue
/// (front first).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpecState {
    items: Vec<u64>,
}

impl SpecState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A state holding `items`, normalized for `spec`.
    pub fn from_items(spec: Spec, mut items: Vec<u64>) -> Self {
        if spec != Spec::Queue {
            items.sort_unstable();
        }
        SpecState { items }
    }

    pub fn items(&self) -> &[u64] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Every (response, next state) pair the specification allows.
pub fn spec_apply(spec: Spec, state: &SpecState, request: OpRequest) -> Vec<(OpResponse, SpecState)> {
    match (spec, request) {
        (Spec::BoundedBag(b), OpRequest::Insert(_)) if state.len() >= b => {
            vec![(OpResponse::Full, state.clone())]
        }
        (Spec::Queue, OpRequest::Insert(x)) => {
            let mut next = state.clone();
            next.items.push(x);
            vec![(OpResponse::Ok, next)]
        }
        (_, OpRequest::Insert(x)) => {
            let mut next = state.clone();
            let at = next.items.partition_point(|&y| y < x);
            next.items.insert(at, x);
            vec![(OpResponse::Ok, next)]
        }
        (_, OpRequest::Take) if state.is_empty() => vec![(OpResponse::Empty, state.clone())],
        (Spec::Queue, OpRequest::Take) => {
            let mut next = state.clone();
            let x = next.items.remove(0);
            vec![(OpResponse::Value(x), next)]
        }
        (_, OpRequest::Take) => {
            let mut out: Vec<(OpResponse, SpecState)> = Vec::new();
            for (i, &x) in state.items.iter().enumerate() {
                if i > 0 && state.items[i - 1] == x {
                    continue;
                }
                let mut next = state.clone();
                next.items.remove(i);
                out.push((OpResponse::Value(x), next));
            }
            out
        }
    }
}

/// Applies one request with a known response, if the spec allows it.
pub fn spec_step(spec: Spec, state: &SpecState, request: OpRequest, response: OpResponse) -> Option<SpecState> {
    spec_apply(spec, state, request)
        .into_iter()
        .find(|(r, _)| *r == response)
        .map(|(_, s)| s)
}

/// Whether some path through [`spec_apply`] produces every listed
/// response, starting from `initial`.
pub fn is_legal_from(spec: Spec, initial: &SpecState, seq: &[(OpRequest, OpResponse)]) -> bool {
    // Responses name the removed element, so each step has at most one
    // matching branch.
    let mut state = initial.clone();
    for &(req, resp) in seq {
        match spec_step(spec, &state, req, resp) {
            Some(next) => state = next,
            None => return false,
        }
    }
    true
}

pub fn is_legal(spec: Spec, seq: &[(OpRequest, OpResponse)]) -> bool {
    is_legal_from(spec, &SpecState::new(), seq)
}
