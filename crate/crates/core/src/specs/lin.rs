use std::collections::HashSet;
use std::fmt;

use super::{spec_apply, History, Spec, SpecState};
use crate::algorithms::OpResponse;

/// One operation of a linearization with the response it gets there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinEntry {
    /// Index into [`History::ops`].
    pub op: usize,
    pub response: OpResponse,
}

pub type Linearization = Vec<LinEntry>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinVerdict {
    Linearizable(Linearization),
    NotLinearizable,
    /// The search-node ceiling was reached first.
    Inconclusive {
        nodes: u64,
    },
}

impl LinVerdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, LinVerdict::Linearizable(_))
    }
}

impl fmt::Display for LinVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinVerdict::Linearizable(l) => {
                let parts: Vec<String> = l.iter().map(|e| format!("#{}/{}", e.op, e.response)).collect();
                write!(f, "linearizable [{}]", parts.join(" "))
            }
            LinVerdict::NotLinearizable => f.write_str("not linearizable"),
            LinVerdict::Inconclusive { nodes } => write!(f, "inconclusive after {nodes} search nodes"),
        }
    }
}

/// The operations that may come next: not yet placed, with every
/// real-time predecessor placed.
fn candidates(h: &History, placed: u64) -> impl Iterator<Item = usize> + '_ {
    (0..h.len()).filter(move |&i| placed & 1 << i == 0 && h.preds[i] & !placed == 0)
}

struct Search<'a> {
    h: &'a History,
    spec: Spec,
    need: u64,
    failed: HashSet<(u64, SpecState)>,
    nodes: u64,
    ceiling: u64,
}

impl Search<'_> {
    /// `None` when the ceiling is hit.
    fn go(&mut self, placed: u64, state: &SpecState, out: &mut Linearization) -> Option<bool> {
        if placed & self.need == self.need {
            return Some(true);
        }
        if self.failed.contains(&(placed, state.clone())) {
            return Some(false);
        }
        self.nodes += 1;
        if self.nodes > self.ceiling {
            return None;
        }
        let cands: Vec<usize> = candidates(self.h, placed).collect();
        for i in cands {
            let op = self.h.ops[i];
            for (resp, next) in spec_apply(self.spec, state, op.request) {
                if op.response.is_some_and(|r| r != resp) {
                    continue;
                }
                out.push(LinEntry { op: i, response: resp });
                if self.go(placed | 1 << i, &next, out)? {
                    return Some(true);
                }
                out.pop();
            }
        }
        self.failed.insert((placed, state.clone()));
        Some(false)
    }
}

/// Searches for a linearization of `h` under `spec` from `initial`.
///
/// Completed operations must all appear with their observed responses;
/// pending ones may be left out or placed with any response the
/// specification allows.
pub fn linearizable(h: &History, spec: Spec, initial: &SpecState, ceiling: u64) -> LinVerdict {
    let mut search = Search {
        h,
        spec,
        need: h.completed_mask(),
        failed: HashSet::new(),
        nodes: 0,
        ceiling,
    };
    let mut out = Vec::new();
    match search.go(0, initial, &mut out) {
        Some(true) => LinVerdict::Linearizable(out),
        Some(false) => LinVerdict::NotLinearizable,
        None => LinVerdict::Inconclusive { nodes: search.nodes },
    }
}

/// Every linearization of `h`: all orders and pending subsets, with every
/// allowed response for pending operations.
pub fn all_linearizations(h: &History, spec: Spec, initial: &SpecState) -> Vec<Linearization> {
    fn go(
        h: &History,
        spec: Spec,
        need: u64,
        placed: u64,
        state: &SpecState,
        cur: &mut Linearization,
        out: &mut Vec<Linearization>,
    ) {
        if placed & need == need {
            out.push(cur.clone());
        }
        for i in candidates(h, placed) {
            let op = h.ops[i];
            for (resp, next) in spec_apply(spec, state, op.request) {
                if op.response.is_some_and(|r| r != resp) {
                    continue;
                }
                cur.push(LinEntry { op: i, response: resp });
                go(h, spec, need, placed | 1 << i, &next, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(h, spec, h.completed_mask(), 0, initial, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::OpRequest;
    use crate::specs::{is_legal_from, HistOp};

    fn op(pid: usize, request: OpRequest, response: Option<OpResponse>) -> HistOp {
        HistOp {
            pid,
            op_seq: 0,
            request,
            response,
        }
    }

    /// Brute force: every subset of pending ops, every permutation, every
    /// response assignment for pending ops.
    fn brute(h: &History, spec: Spec) -> bool {
        let n = h.len();
        let need = h.completed_mask();
        for mask in 0u64..1 << n {
            if mask & need != need {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|i| mask & 1 << i != 0).collect();
            if permutations(&members)
                .into_iter()
                .any(|perm| order_ok(h, &perm) && legal_some(h, spec, &perm))
            {
                return true;
            }
        }
        false
    }

    fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
        if v.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for i in 0..v.len() {
            let mut rest = v.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    fn order_ok(h: &History, perm: &[usize]) -> bool {
        perm.iter().enumerate().all(|(k, &i)| {
            let before: u64 = perm[..k].iter().fold(0, |m, &j| m | 1 << j);
            // every predecessor of i that is in the permutation must come earlier,
            // and predecessors outside it must be pending (never the case for
            // completed ones, which are all included).
            h.preds[i] & !before & perm.iter().fold(0, |m, &j| m | 1 << j) == 0
        })
    }

    fn legal_some(h: &History, spec: Spec, perm: &[usize]) -> bool {
        let values: Vec<OpResponse> = h
            .ops
            .iter()
            .filter_map(|o| match o.request {
                OpRequest::Insert(x) => Some(OpResponse::Value(x)),
                _ => None,
            })
            .chain([OpResponse::Ok, OpResponse::Full, OpResponse::Empty])
            .collect();
        fn assign(
            h: &History,
            spec: Spec,
            perm: &[usize],
            k: usize,
            values: &[OpResponse],
            cur: &mut Vec<(OpRequest, OpResponse)>,
        ) -> bool {
            if k == perm.len() {
                return is_legal_from(spec, &SpecState::new(), cur);
            }
            let o = h.ops[perm[k]];
            let choices: Vec<OpResponse> = match o.response {
                Some(r) => vec![r],
                None => values.to_vec(),
            };
            choices.into_iter().any(|r| {
                cur.push((o.request, r));
                let ok = assign(h, spec, perm, k + 1, values, cur);
                cur.pop();
                ok
            })
        }
        assign(h, spec, perm, 0, &values, &mut Vec::new())
    }

    #[test]
    fn empty_take_concurrent_with_insert() {
        let h = History::new(
            vec![
                op(0, OpRequest::Insert(1), Some(OpResponse::Ok)),
                op(1, OpRequest::Take, Some(OpResponse::Empty)),
            ],
            vec![0, 0],
        )
        .unwrap();
        match linearizable(&h, Spec::Bag, &SpecState::new(), 1000) {
            LinVerdict::Linearizable(l) => assert_eq!(l[0].op, 1),
            v => panic!("{v}"),
        }
    }

    #[test]
    fn duplicate_take_values_are_rejected() {
        let h = History::new(
            vec![
                op(0, OpRequest::Insert(1), Some(OpResponse::Ok)),
                op(1, OpRequest::Take, Some(OpResponse::Value(1))),
                op(2, OpRequest::Take, Some(OpResponse::Value(1))),
            ],
            vec![0, 0, 0],
        )
        .unwrap();
        assert_eq!(
            linearizable(&h, Spec::Bag, &SpecState::new(), 1000),
            LinVerdict::NotLinearizable
        );
    }

    #[test]
    fn ceiling_is_inconclusive() {
        let h = History::new(vec![op(0, OpRequest::Take, Some(OpResponse::Value(5)))], vec![0]).unwrap();
        assert!(matches!(
            linearizable(&h, Spec::Bag, &SpecState::new(), 0),
            LinVerdict::Inconclusive { .. }
        ));
    }

    /// All histories of up to 4 operations on 3 processes built from a small
    /// alphabet agree with the brute-force enumerator.
    #[test]
    fn agrees_with_brute_force() {
        let requests = [OpRequest::Insert(1), OpRequest::Insert(2), OpRequest::Take];
        let responses_for = |r: OpRequest| -> Vec<Option<OpResponse>> {
            match r {
                OpRequest::Insert(_) => vec![None, Some(OpResponse::Ok), Some(OpResponse::Full)],
                OpRequest::Take => vec![
                    None,
                    Some(OpResponse::Empty),
                    Some(OpResponse::Value(1)),
                    Some(OpResponse::Value(2)),
                ],
            }
        };
        let mut checked = 0;
        // Operations are described by (request, response, interval) with
        // intervals drawn from a few shapes; the partial order follows.
        let intervals = [(0, 1), (2, 3), (0, 3), (1, 2)];
        for len in 1..=3usize {
            let mut idx = vec![0usize; len * 3];
            loop {
                let mut ops = Vec::new();
                let mut ivs = Vec::new();
                let mut values = HashSet::new();
                let mut ok = true;
                for k in 0..len {
                    let r = requests[idx[3 * k] % 3];
                    let resps = responses_for(r);
                    let resp = resps[idx[3 * k + 1] % resps.len()];
                    if let OpRequest::Insert(x) = r {
                        ok &= values.insert(x);
                    }
                    let (inv, mut comp) = intervals[idx[3 * k + 2] % 4];
                    if resp.is_none() {
                        comp = usize::MAX;
                    }
                    ops.push(op(k, r, resp));
                    ivs.push((inv, comp));
                }
                if ok {
                    let preds = (0..len)
                        .map(|i| (0..len).filter(|&j| ivs[j].1 < ivs[i].0).fold(0u64, |m, j| m | 1 << j))
                        .collect();
                    let h = History::new(ops, preds).unwrap();
                    for spec in [Spec::Bag, Spec::BoundedBag(1), Spec::Queue] {
                        let fast = linearizable(&h, spec, &SpecState::new(), u64::MAX).is_linearizable();
                        assert_eq!(fast, brute(&h, spec), "{spec} {:?}", h);
                        let all = all_linearizations(&h, spec, &SpecState::new());
                        assert_eq!(!all.is_empty(), fast);
                        checked += 1;
                    }
                }
                // advance odometer
                let mut k = 0;
                loop {
                    if k == idx.len() {
                        break;
                    }
                    idx[k] += 1;
                    let radix = [3, 4, 4][k % 3];
                    if idx[k] < radix {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == idx.len() {
                    break;
                }
            }
        }
        assert!(checked > 1000);
    }
}
