//! Search for strong-linearizability violations by backward induction over
//! the execution tree.
//!
//! For a node `v`, `Feas(v)` is the set of linearizations `L` of `v`'s
//! history such that a prefix-preserving linearization function exists on
//! the subtree below `v` with `f(v) = L`. At a leaf it is every
//! linearization; at an inner node it is the linearizations that are a
//! prefix of some member of every child's set. The implementation is
//! strongly linearizable on the tree iff the root's set is non-empty.

use std::collections::HashMap;
use std::sync::Arc;

use super::witness::{build_witness, SlWitness, WitnessMode};

/// How many ancestors of the frontier are tried for an explicit witness.
const ANCESTOR_TRIES: usize = 8;
use crate::algorithms::{OpRequest, OpResponse, StepRecord};
use crate::error::{Error, Result};
use crate::primitives::Pid;
use crate::sim::{fold_tree, Bounds, Fold, GraphStats, Sim, Workload};
use crate::specs::{all_linearizations, History, Spec, SpecState};

/// A linearization packed as `(op << 8) | response code` entries, with
/// operations numbered by workload position.
pub(crate) type Lin = Vec<u16>;

/// Numbers operations by their position in the workload and encodes
/// responses compactly.
#[derive(Clone, Debug)]
pub(crate) struct OpNumbering {
    offsets: Vec<usize>,
    /// Inserted value of each workload position, if it is an Insert.
    values: Vec<Option<u64>>,
}

impl OpNumbering {
    pub(crate) fn new(workload: &Workload) -> Result<Self> {
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for l in &workload.ops {
            offsets.push(values.len());
            values.extend(l.iter().map(|r| match r {
                OpRequest::Insert(x) => Some(*x),
                OpRequest::Take => None,
            }));
        }
        if values.len() > 64 {
            return Err(Error::usage("workloads are limited to 64 operations"));
        }
        Ok(OpNumbering { offsets, values })
    }

    pub(crate) fn index(&self, pid: Pid, op_seq: usize) -> usize {
        self.offsets[pid] + op_seq
    }

    fn code(&self, r: OpResponse) -> u16 {
        match r {
            OpResponse::Ok => 0,
            OpResponse::Full => 1,
            OpResponse::Empty => 2,
            OpResponse::Value(x) => {
                3 + self
                    .values
                    .iter()
                    .position(|v| *v == Some(x))
                    .expect("taken values were inserted") as u16
            }
        }
    }

    pub(crate) fn decode(&self, entry: u16) -> (usize, OpResponse) {
        let op = (entry >> 8) as usize;
        let r = match entry & 0xff {
            0 => OpResponse::Ok,
            1 => OpResponse::Full,
            2 => OpResponse::Empty,
            c => OpResponse::Value(self.values[(c - 3) as usize].expect("code names an Insert")),
        };
        (op, r)
    }

    /// Which process and operation a workload position refers to.
    pub(crate) fn op_of(&self, index: usize) -> (Pid, usize) {
        let pid = (0..self.offsets.len())
            .find(|&p| self.offsets[p] <= index && index < self.end(p))
            .expect("index within the workload");
        (pid, index - self.offsets[pid])
    }

    fn end(&self, pid: Pid) -> usize {
        self.offsets.get(pid + 1).copied().unwrap_or(self.values.len())
    }

    /// Every linearization of the node's history, encoded.
    pub(crate) fn linearizations(&self, sim: &Sim, spec: Spec) -> Result<Vec<Lin>> {
        let key = sim.history_key();
        let h = History::from_key(&key)?;
        let mut lins: Vec<Lin> = all_linearizations(&h, spec, &SpecState::new())
            .into_iter()
            .map(|l| {
                l.iter()
                    .map(|e| {
                        let o = &h.ops[e.op];
                        ((self.index(o.pid, o.op_seq) as u16) << 8) | self.code(e.response)
                    })
                    .collect()
            })
            .collect();
        lins.sort_unstable();
        Ok(lins)
    }
}

/// `a` is a prefix of some member of `set`.
pub(crate) fn extendable(a: &Lin, set: &[Lin]) -> bool {
    set.iter().any(|l| l.len() >= a.len() && l[..a.len()] == a[..])
}

#[derive(Clone, Debug)]
enum FeasValue {
    Feasible(Arc<Vec<Lin>>),
    /// The schedule from this node down to a node whose feasible set is
    /// empty although every explored child's is not.
    Violation(Vec<Pid>),
}

struct Finder {
    spec: Spec,
    numbering: OpNumbering,
    intern: HashMap<Vec<Lin>, Arc<Vec<Lin>>>,
}

impl Finder {
    fn intern(&mut self, set: Vec<Lin>) -> Arc<Vec<Lin>> {
        if let Some(a) = self.intern.get(&set) {
            return a.clone();
        }
        let a = Arc::new(set.clone());
        self.intern.insert(set, a.clone());
        a
    }
}

impl Fold for Finder {
    type State = ();
    type Value = FeasValue;

    fn root(&mut self, _: &Sim) -> Result<()> {
        Ok(())
    }

    fn child(&mut self, _: &(), _: &Sim, _: Pid, _: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn leaf(&mut self, _: &(), sim: &Sim, _truncated: bool) -> Result<FeasValue> {
        // A truncated execution is still an execution: f must be defined
        // on it, so its linearizations constrain the ancestors as well.
        let lins = self.numbering.linearizations(sim, self.spec)?;
        Ok(FeasValue::Feasible(self.intern(lins)))
    }

    fn node(&mut self, _: &(), sim: &Sim, children: Vec<(Pid, FeasValue)>) -> Result<FeasValue> {
        let mut sets = Vec::with_capacity(children.len());
        for (pid, v) in children {
            match v {
                FeasValue::Violation(mut path) => {
                    path.insert(0, pid);
                    return Ok(FeasValue::Violation(path));
                }
                FeasValue::Feasible(s) => sets.push(s),
            }
        }
        let lins = self.numbering.linearizations(sim, self.spec)?;
        let feas: Vec<Lin> = lins
            .into_iter()
            .filter(|l| sets.iter().all(|s| extendable(l, s)))
            .collect();
        if feas.is_empty() {
            return Ok(FeasValue::Violation(Vec::new()));
        }
        Ok(FeasValue::Feasible(self.intern(feas)))
    }

    fn decisive(&self, value: &FeasValue) -> bool {
        matches!(value, FeasValue::Violation(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FinderStats {
    pub graph: GraphStats,
    /// Distinct feasible sets stored.
    pub sets: usize,
}

#[derive(Clone, Debug)]
pub enum FinderOutcome {
    /// No violation within the bounds.
    None,
    Violation(Box<SlWitness>),
}

/// Searches the execution tree of `workload` (after `prefix`) for a node
/// at which no prefix-preserving choice of linearization exists, and
/// packages a witness for it.
pub fn find_sl_violation(
    workload: &Workload,
    spec: Spec,
    bounds: &Bounds,
    prefix: &[Pid],
) -> Result<(FinderOutcome, FinderStats)> {
    let mut finder = Finder {
        spec,
        numbering: OpNumbering::new(workload)?,
        intern: HashMap::new(),
    };
    let (value, graph) = fold_tree(Arc::new(workload.clone()), bounds, prefix, &mut finder)?;
    let stats = FinderStats {
        graph,
        sets: finder.intern.len(),
    };
    match value {
        FeasValue::Feasible(_) => Ok((FinderOutcome::None, stats)),
        FeasValue::Violation(path) => {
            let mut alpha = prefix.to_vec();
            alpha.extend(path);
            // Every ancestor of the frontier also has an empty set. When no
            // small set of branches refutes the frontier itself, a shorter
            // prefix often has one.
            let mut w = build_witness(workload, spec, bounds, &alpha)?;
            let mut k = alpha.len();
            while w.mode == WitnessMode::Tree && k > prefix.len() && alpha.len() - k < ANCESTOR_TRIES {
                k -= 1;
                let up = build_witness(workload, spec, bounds, &alpha[..k])?;
                if up.mode != WitnessMode::Tree {
                    w = up;
                }
            }
            Ok((FinderOutcome::Violation(Box::new(w)), stats))
        }
    }
}

/// Whether the node reached by `alpha` has an empty feasible set, and if so
/// a witness rooted there.
pub fn sl_frontier_at(workload: &Workload, spec: Spec, bounds: &Bounds, alpha: &[Pid]) -> Result<Option<SlWitness>> {
    let mut finder = Finder {
        spec,
        numbering: OpNumbering::new(workload)?,
        intern: HashMap::new(),
    };
    let (value, _) = fold_tree(Arc::new(workload.clone()), bounds, alpha, &mut finder)?;
    match value {
        FeasValue::Feasible(_) => Ok(None),
        FeasValue::Violation(_) => build_witness(workload, spec, bounds, alpha).map(Some),
    }
}
