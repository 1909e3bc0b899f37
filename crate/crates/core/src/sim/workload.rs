use std::collections::HashSet;
use std::fmt;

use crate::algorithms::{AlgorithmId, ChooserPolicy, OpRequest};
use crate::error::{Error, Result};
use crate::primitives::Pid;

/// Per-process operation lists for one algorithm instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Workload {
    pub algorithm: AlgorithmId,
    pub n: usize,
    pub b: usize,
    pub chooser: ChooserPolicy,
    /// `ops[pid]` is the ordered list of requests issued by `pid`.
    pub ops: Vec<Vec<OpRequest>>,
}

impl Workload {
    /// Validates roles, process ids and value distinctness.
    pub fn new(
        algorithm: AlgorithmId,
        n: usize,
        b: usize,
        chooser: ChooserPolicy,
        mut ops: Vec<Vec<OpRequest>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("n must be at least 1"));
        }
        let processes = algorithm.processes(n);
        if ops.len() > processes {
            if ops[processes..].iter().any(|o| !o.is_empty()) {
                return Err(Error::usage(format!(
                    "workload names process {} but {algorithm} with n = {n} has {processes} processes",
                    ops.len() - 1
                )));
            }
            ops.truncate(processes);
        }
        ops.resize(processes, Vec::new());
        let mut seen = HashSet::new();
        for (pid, list) in ops.iter().enumerate() {
            for req in list {
                match (algorithm.single_producer(), pid, req) {
                    (true, 0, OpRequest::Take) => return Err(Error::usage("the producer (p0) cannot Take")),
                    (true, p, OpRequest::Insert(_)) if p != 0 => {
                        return Err(Error::usage(format!("consumer p{p} cannot Insert")))
                    }
                    _ => {}
                }
                if let OpRequest::Insert(v) = req {
                    if !seen.insert(*v) {
                        return Err(Error::usage(format!("value {v} is inserted twice")));
                    }
                }
            }
        }
        Ok(Workload {
            algorithm,
            n,
            b,
            chooser,
            ops,
        })
    }

    /// Parses the mini-language `p0:I1,I2;p1:T;p2:T`.
    pub fn parse(algorithm: AlgorithmId, n: usize, b: usize, chooser: ChooserPolicy, text: &str) -> Result<Self> {
        let mut ops: Vec<Vec<OpRequest>> = Vec::new();
        let mut named = HashSet::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (proc_tok, list) = part
                .split_once(':')
                .ok_or_else(|| Error::usage(format!("expected `p<k>:<ops>`, got `{part}`")))?;
            let pid: Pid = proc_tok
                .trim()
                .strip_prefix('p')
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::usage(format!("bad process `{proc_tok}`")))?;
            if !named.insert(pid) {
                return Err(Error::usage(format!("process p{pid} listed twice")));
            }
            if pid >= ops.len() {
                ops.resize(pid + 1, Vec::new());
            }
            for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                ops[pid].push(tok.parse()?);
            }
        }
        Workload::new(algorithm, n, b, chooser, ops)
    }

    pub fn processes(&self) -> usize {
        self.ops.len()
    }

    pub fn total_ops(&self) -> usize {
        self.ops.iter().map(Vec::len).sum()
    }
}

impl fmt::Display for Workload {
    /// The mini-language form; processes without operations are omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .ops
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(pid, l)| {
                let ops: Vec<String> = l.iter().map(OpRequest::to_string).collect();
                format!("p{pid}:{}", ops.join(","))
            })
            .collect();
        f.write_str(&parts.join(";"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(alg: AlgorithmId, n: usize, text: &str) -> Result<Workload> {
        Workload::parse(alg, n, 1, ChooserPolicy::Smallest, text)
    }

    #[test]
    fn round_trips() {
        let w = parse(AlgorithmId::Sl1b, 2, "p0:I1,I2;p1:T;p2:T").unwrap();
        assert_eq!(w.ops.len(), 3);
        assert_eq!(w.ops[0], vec![OpRequest::Insert(1), OpRequest::Insert(2)]);
        assert_eq!(w.to_string(), "p0:I1,I2;p1:T;p2:T");
        assert_eq!(parse(AlgorithmId::Sl1b, 2, &w.to_string()).unwrap(), w);
        let u = parse(AlgorithmId::UnboundedSl, 3, "p2:T,I4").unwrap();
        assert_eq!(u.to_string(), "p2:T,I4");
        assert_eq!(u.total_ops(), 2);
    }

    #[test]
    fn rejects_bad_workloads() {
        assert!(parse(AlgorithmId::Sl1b, 2, "p1:I1").is_err());
        assert!(parse(AlgorithmId::Sl1b, 2, "p0:T").is_err());
        assert!(parse(AlgorithmId::Sl1b, 2, "p3:T").is_err());
        assert!(parse(AlgorithmId::UnboundedSl, 2, "p0:I1;p1:I1").is_err());
        assert!(parse(AlgorithmId::UnboundedSl, 2, "p0:X").is_err());
        assert!(parse(AlgorithmId::UnboundedSl, 2, "q0:T").is_err());
        assert!(parse(AlgorithmId::UnboundedSl, 2, "p0:T;p0:T").is_err());
    }
}
