use std::fmt;

use crate::algorithms::{OpRequest, OpResponse};
use crate::error::{Error, Result};
use crate::primitives::Pid;
use crate::sim::{OpRecord, Trace};

/// One operation of a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HistOp {
    pub pid: Pid,
    pub op_seq: usize,
    pub request: OpRequest,
    /// `None` while the operation is pending.
    pub response: Option<OpResponse>,
}

impl fmt::Display for HistOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.{}:{}", self.pid, self.op_seq, self.request)?;
        match self.response {
            Some(r) => write!(f, "/{r}"),
            None => f.write_str("/?"),
        }
    }
}

/// Operations plus the completed-before partial order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    pub ops: Vec<HistOp>,
    /// `preds[i]` has bit `j` set iff op `j` completed before op `i` began.
    pub preds: Vec<u64>,
}

/// Histories are limited to this many operations (one bit each).
pub const MAX_OPS: usize = 64;

impl History {
    /// Builds a history, checking the operation count.
    pub fn new(ops: Vec<HistOp>, preds: Vec<u64>) -> Result<Self> {
        if ops.len() > MAX_OPS || preds.len() != ops.len() {
            return Err(Error::usage(format!(
                "histories hold at most {MAX_OPS} operations with one predecessor mask each"
            )));
        }
        Ok(History { ops, preds })
    }

    /// The history of a trace, operations in `(pid, op_seq)` order.
    pub fn from_trace(trace: &Trace) -> Result<Self> {
        Self::from_records(&trace.ops)
    }

    pub fn from_records(records: &[OpRecord]) -> Result<Self> {
        let mut recs: Vec<&OpRecord> = records.iter().collect();
        recs.sort_by_key(|o| (o.pid, o.op_seq));
        let ops = recs
            .iter()
            .map(|o| HistOp {
                pid: o.pid,
                op_seq: o.op_seq,
                request: o.request,
                response: o.response,
            })
            .collect();
        let preds = recs
            .iter()
            .map(|o| {
                recs.iter()
                    .enumerate()
                    .filter(|(_, p)| p.complete.is_some_and(|c| c < o.invoke))
                    .fold(0u64, |m, (j, _)| m | 1 << j)
            })
            .collect();
        History::new(ops, preds)
    }

    /// Builds from `(pid, op_seq, request, response, preds)` tuples as
    /// produced by the simulator's history key.
    pub fn from_key(key: &[(Pid, usize, OpRequest, Option<OpResponse>, u64)]) -> Result<Self> {
        let ops = key
            .iter()
            .map(|&(pid, op_seq, request, response, _)| HistOp {
                pid,
                op_seq,
                request,
                response,
            })
            .collect();
        History::new(ops, key.iter().map(|k| k.4).collect())
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Bitmask of completed operations.
    pub fn completed_mask(&self) -> u64 {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, o)| o.response.is_some())
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    /// Index of `(pid, op_seq)`.
    pub fn index_of(&self, pid: Pid, op_seq: usize) -> Option<usize> {
        self.ops.iter().position(|o| o.pid == pid && o.op_seq == op_seq)
    }

    /// Removes operation `i`, renumbering the predecessor masks.
    pub fn without(&self, i: usize) -> History {
        let squeeze = |m: u64| {
            let low = m & ((1u64 << i) - 1);
            let high = if i + 1 < 64 { (m >> (i + 1)) << i } else { 0 };
            low | high
        };
        let mut ops = self.ops.clone();
        ops.remove(i);
        let mut preds: Vec<u64> = self.preds.iter().map(|&m| squeeze(m)).collect();
        preds.remove(i);
        History { ops, preds }
    }
}
