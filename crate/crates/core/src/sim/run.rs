use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::{Event, OpRecord, Trace, Workload};
use crate::algorithms::{AlgorithmInstance, OpRequest, OpResponse, StepRecord};
use crate::error::{Error, Result};
use crate::primitives::Pid;

/// Exploration bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub max_steps: usize,
    /// A process whose pending operation would start repeat-loop
    /// iteration `max_loop_iters + 1` is not scheduled again.
    pub max_loop_iters: u32,
    pub node_ceiling: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_steps: 200,
            max_loop_iters: 3,
            node_ceiling: 200_000_000,
        }
    }
}

/// An algorithm instance driven by a workload, recording its trace.
#[derive(Clone, Debug)]
pub struct Sim {
    workload: Arc<Workload>,
    inst: AlgorithmInstance,
    next_request: Vec<usize>,
    trace: Trace,
    /// Index into `trace.ops` of each process's pending operation.
    pending_op: Vec<Option<usize>>,
}

impl Sim {
    pub fn new(workload: Arc<Workload>) -> Result<Self> {
        let inst = AlgorithmInstance::new(workload.algorithm, workload.n, workload.b, workload.chooser.clone())?;
        let processes = inst.processes();
        if workload.ops.len() != processes {
            return Err(Error::usage(format!(
                "workload lists {} processes, instance has {processes}",
                workload.ops.len()
            )));
        }
        let trace = Trace::new(workload.algorithm, workload.n, workload.b, workload.chooser.clone());
        Ok(Sim {
            workload,
            inst,
            next_request: vec![0; processes],
            trace,
            pending_op: vec![None; processes],
        })
    }

    pub fn workload(&self) -> &Arc<Workload> {
        &self.workload
    }

    pub fn instance(&self) -> &AlgorithmInstance {
        &self.inst
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Index of the next request each process will begin.
    pub fn next_requests(&self) -> &[usize] {
        &self.next_request
    }

    pub fn processes(&self) -> usize {
        self.inst.processes()
    }

    /// The process has a pending operation or requests left to issue.
    pub fn can_step(&self, pid: Pid) -> bool {
        self.inst.program(pid).pending().is_some() || self.next_request[pid] < self.workload.ops[pid].len()
    }

    fn within_bounds(&self, pid: Pid, bounds: &Bounds) -> bool {
        let p = self.inst.program(pid);
        p.pending().is_none() || p.iteration() <= bounds.max_loop_iters
    }

    /// Processes that may take the next step under `bounds`.
    pub fn enabled(&self, bounds: &Bounds) -> Vec<Pid> {
        if self.trace.len() >= bounds.max_steps {
            return Vec::new();
        }
        (0..self.processes())
            .filter(|&p| self.can_step(p) && self.within_bounds(p, bounds))
            .collect()
    }

    /// Some process could still step but the bounds forbid it.
    pub fn truncated(&self, bounds: &Bounds) -> bool {
        (0..self.processes()).any(|p| self.can_step(p))
            && (self.trace.len() >= bounds.max_steps
                || (0..self.processes()).any(|p| self.can_step(p) && !self.within_bounds(p, bounds)))
    }

    /// Every process has finished its workload.
    pub fn finished(&self) -> bool {
        (0..self.processes()).all(|p| !self.can_step(p))
    }

    /// The operations begun so far in `(pid, op_seq)` order, each with its
    /// request, response and the set of operations (as a bitmask over the
    /// same order) that completed before it was invoked.
    pub fn history_key(&self) -> Vec<(Pid, usize, OpRequest, Option<OpResponse>, u64)> {
        let mut ops: Vec<&OpRecord> = self.trace.ops.iter().collect();
        ops.sort_by_key(|o| (o.pid, o.op_seq));
        ops.iter()
            .map(|o| {
                let preds = ops
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.complete.is_some_and(|c| c < o.invoke))
                    .fold(0u64, |m, (i, _)| m | 1 << i);
                (o.pid, o.op_seq, o.request, o.response, preds)
            })
            .collect()
    }

    /// A 128-bit fingerprint of everything that determines the node's
    /// future behavior and the linearizations of its history: the instance
    /// configuration, request cursors, trace length and [`Sim::history_key`].
    pub fn fingerprint(&self) -> u128 {
        let history = self.history_key();
        let half = |salt: u64| {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            self.inst.hash(&mut h);
            self.next_request.hash(&mut h);
            self.trace.len().hash(&mut h);
            history.hash(&mut h);
            h.finish()
        };
        (half(0x9e37_79b9_7f4a_7c15) as u128) << 64 | half(0xc2b2_ae3d_27d4_eb4f) as u128
    }

    /// Lets `pid` take one step, beginning its next request if idle.
    pub fn step(&mut self, pid: Pid) -> Result<StepRecord> {
        if pid >= self.processes() {
            return Err(Error::usage(format!("process {pid} does not exist")));
        }
        let seq = self.trace.events.len();
        if self.inst.program(pid).pending().is_none() {
            let k = self.next_request[pid];
            let request = *self.workload.ops[pid]
                .get(k)
                .ok_or_else(|| Error::usage(format!("process {pid} has no operations left")))?;
            self.inst.begin_op(pid, request)?;
            self.next_request[pid] += 1;
            self.pending_op[pid] = Some(self.trace.ops.len());
            self.trace.ops.push(OpRecord {
                pid,
                op_seq: k,
                request,
                response: None,
                invoke: seq,
                complete: None,
            });
        }
        let rec = self.inst.step(pid)?;
        let op = self.pending_op[pid].expect("pending op recorded");
        self.trace.events.push(Event {
            seq,
            pid,
            op_seq: self.trace.ops[op].op_seq,
            line: rec.line,
            obj: self.inst.object_id(rec.obj),
            action: rec.action,
            response: rec.response,
            view: rec.view,
        });
        if let Some(r) = rec.completed {
            let o = &mut self.trace.ops[op];
            o.response = Some(r);
            o.complete = Some(seq);
            self.pending_op[pid] = None;
        }
        Ok(rec)
    }
}

/// Runs `schedule` against a fresh instance of `workload`.
pub fn run(workload: &Workload, schedule: &[Pid]) -> Result<Trace> {
    let mut sim = Sim::new(Arc::new(workload.clone()))?;
    for &pid in schedule {
        if pid >= sim.processes() || !sim.can_step(pid) {
            return Err(Error::usage(format!(
                "schedule names process {pid}, which has no step to take at seq {}",
                sim.trace().len()
            )));
        }
        sim.step(pid)?;
    }
    Ok(sim.into_trace())
}
