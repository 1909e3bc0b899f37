use std::sync::Arc;

use super::{Sim, Trace, Workload};
use crate::algorithms::OpRequest;
use crate::error::{Error, Result};

/// Rebuilds the workload implied by a recorded trace's operation records.
pub fn workload_of(trace: &Trace) -> Result<Workload> {
    let processes = trace.algorithm.processes(trace.n);
    let mut ops: Vec<Vec<(usize, OpRequest)>> = vec![Vec::new(); processes];
    for o in &trace.ops {
        let slot = ops
            .get_mut(o.pid)
            .ok_or_else(|| Error::usage(format!("OP record names missing process {}", o.pid)))?;
        slot.push((o.op_seq, o.request));
    }
    let mut lists = Vec::with_capacity(processes);
    for (pid, mut l) in ops.into_iter().enumerate() {
        l.sort_by_key(|(k, _)| *k);
        if l.iter().enumerate().any(|(i, (k, _))| i != *k) {
            return Err(Error::usage(format!(
                "OP records of process {pid} are not numbered 0, 1, ..."
            )));
        }
        lists.push(l.into_iter().map(|(_, r)| r).collect());
    }
    Workload::new(trace.algorithm, trace.n, trace.b, trace.chooser.clone(), lists)
}

/// Re-executes a recorded trace and checks every recorded step and
/// operation boundary. Returns the regenerated trace.
pub fn replay_trace(recorded: &Trace) -> Result<Trace> {
    let workload = workload_of(recorded)?;
    let mut sim = Sim::new(Arc::new(workload))?;
    for e in &recorded.events {
        if !sim.can_step(e.pid) {
            return Err(Error::Divergence {
                seq: e.seq,
                expected: e.to_line(),
                actual: format!("process {} has nothing left to do", e.pid),
            });
        }
        sim.step(e.pid)?;
        let got = sim.trace().events.last().expect("just stepped");
        if got != e {
            let (expected, actual) = (e.to_line(), got.to_line());
            // Views are not serialized; ignore them when the text agrees.
            if expected != actual || e.view.is_some() {
                return Err(Error::Divergence {
                    seq: e.seq,
                    expected,
                    actual,
                });
            }
        }
    }
    let regenerated = sim.into_trace();
    for (want, got) in recorded.ops.iter().zip(&regenerated.ops) {
        if want != got {
            return Err(Error::Divergence {
                seq: want.complete.unwrap_or(want.invoke),
                expected: want.to_line(),
                actual: got.to_line(),
            });
        }
    }
    if recorded.ops.len() != regenerated.ops.len() {
        return Err(Error::Divergence {
            seq: recorded.events.len(),
            expected: format!("{} operations", recorded.ops.len()),
            actual: format!("{} operations", regenerated.ops.len()),
        });
    }
    Ok(regenerated)
}

/// Parses and replays a trace file's text.
pub fn replay(text: &str) -> Result<Trace> {
    replay_trace(&Trace::parse(text)?)
}
