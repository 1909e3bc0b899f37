//! Native stress runs: the algorithms' step machines on hardware atomics,
//! one OS thread per process, checked after the fact.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::{Barrier, Mutex};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{AlgorithmId, AlgorithmInstance, ChooserPolicy, OpRequest, OpResponse};
use crate::error::{Error, Result};
use crate::primitives::{NativeMemory, Pid};
use crate::specs::{linearizable, HistOp, History, LinVerdict, Spec, SpecState};

#[derive(Clone, Debug)]
pub struct StressConfig {
    pub algorithm: AlgorithmId,
    pub n: usize,
    pub b: usize,
    /// Total operations across all threads (rounded up to whole rounds).
    pub ops: usize,
    /// Operations per thread between two barriers.
    pub per_round: usize,
    /// Check every `window_every`-th round for linearizability.
    pub window_every: usize,
    pub seed: u64,
}

impl StressConfig {
    pub fn new(algorithm: AlgorithmId, n: usize, b: usize, ops: usize, seed: u64) -> Self {
        StressConfig {
            algorithm,
            n,
            b,
            ops,
            per_round: 2,
            window_every: 1,
            seed,
        }
    }

    fn spec(&self) -> Spec {
        match self.algorithm.capacity(self.b) {
            Some(c) => Spec::BoundedBag(c),
            None => Spec::Bag,
        }
    }
}

/// One completed operation, timestamped by a global counter.
#[derive(Clone, Copy, Debug)]
pub struct StressOp {
    pub pid: Pid,
    pub round: usize,
    pub request: OpRequest,
    pub response: OpResponse,
    pub invoke: u64,
    pub complete: u64,
    pub steps: u64,
}

#[derive(Clone, Debug, Default)]
pub struct StressReport {
    pub ops: usize,
    pub rounds: usize,
    pub windows_checked: usize,
    pub taken: usize,
    pub empty: usize,
    pub full: usize,
    pub max_steps: u64,
    pub failures: Vec<String>,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A Take that has not finished after this many steps is reported.
const STEP_LIMIT: u64 = 10_000_000;

/// Runs the workload on native memory and checks the result.
pub fn stress(cfg: &StressConfig) -> Result<StressReport> {
    let inst = AlgorithmInstance::new(cfg.algorithm, cfg.n, cfg.b, ChooserPolicy::Random(cfg.seed))?;
    let processes = inst.processes();
    if cfg.per_round == 0 || cfg.window_every == 0 {
        return Err(Error::usage("per_round and window_every must be positive"));
    }
    let per_round_total = cfg.per_round * processes;
    let rounds = cfg.ops.div_ceil(per_round_total);
    let capacity = rounds * per_round_total + 8;
    let memory = NativeMemory::from_layout(inst.memory(), capacity)?;
    let clock = AtomicU64::new(0);
    let barrier = Barrier::new(processes);
    let results: Mutex<Vec<Result<Vec<StressOp>>>> = Mutex::new(Vec::new());
    thread::scope(|s| {
        for pid in 0..processes {
            let (inst, memory, clock, barrier, results) = (&inst, &memory, &clock, &barrier, &results);
            s.spawn(move || {
                let out = worker(cfg, inst, memory, clock, barrier, pid, rounds);
                results.lock().expect("no worker panicked").push(out);
            });
        }
    });
    let mut ops = Vec::new();
    for r in results.into_inner().expect("no worker panicked") {
        ops.extend(r?);
    }
    Ok(check(cfg, ops, rounds))
}

fn worker(
    cfg: &StressConfig,
    inst: &AlgorithmInstance,
    memory: &NativeMemory,
    clock: &AtomicU64,
    barrier: &Barrier,
    pid: Pid,
    rounds: usize,
) -> Result<Vec<StressOp>> {
    let mut program = inst.program(pid).clone();
    let mut chooser = inst.chooser().clone();
    let layout = inst.layout().clone();
    let mut view = memory.view();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(pid as u64 + 1);
    let mut next_value = 0u64;
    let mut out = Vec::with_capacity(rounds * cfg.per_round);
    let mut failure = None;
    for round in 0..rounds {
        for _ in 0..cfg.per_round {
            if failure.is_some() {
                break;
            }
            let insert = if cfg.algorithm.single_producer() {
                pid == 0
            } else {
                rng.gen_bool(0.5)
            };
            let request = if insert {
                next_value += 1;
                // Values are unique per run: process id in the low bits.
                OpRequest::Insert(next_value * 64 + pid as u64)
            } else {
                OpRequest::Take
            };
            let invoke = clock.fetch_add(1, SeqCst);
            if let Err(e) = program.begin(request) {
                failure = Some(e);
                break;
            }
            let mut steps = 0;
            let response = loop {
                steps += 1;
                match program.step(&mut view, &layout, &mut chooser) {
                    Ok(rec) => {
                        if let Some(r) = rec.completed {
                            break Some(r);
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        break None;
                    }
                }
                if steps >= STEP_LIMIT {
                    failure = Some(Error::usage(format!(
                        "p{pid}: {request} did not finish in {STEP_LIMIT} steps"
                    )));
                    break None;
                }
            };
            let complete = clock.fetch_add(1, SeqCst);
            if let Some(response) = response {
                out.push(StressOp {
                    pid,
                    round,
                    request,
                    response,
                    invoke,
                    complete,
                    steps,
                });
            }
        }
        // Keep the barrier count intact even after a failure.
        barrier.wait();
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn check(cfg: &StressConfig, mut ops: Vec<StressOp>, rounds: usize) -> StressReport {
    let spec = cfg.spec();
    ops.sort_by_key(|o| (o.round, o.invoke));
    let mut report = StressReport {
        ops: ops.len(),
        rounds,
        ..StressReport::default()
    };
    let mut inserted: HashMap<u64, &StressOp> = HashMap::new();
    let mut taken: HashMap<u64, &StressOp> = HashMap::new();
    for o in &ops {
        report.max_steps = report.max_steps.max(o.steps);
        match (o.request, o.response) {
            (OpRequest::Insert(v), OpResponse::Ok) => {
                inserted.insert(v, o);
            }
            (OpRequest::Insert(_), OpResponse::Full) => report.full += 1,
            (OpRequest::Take, OpResponse::Empty) => report.empty += 1,
            (OpRequest::Take, OpResponse::Value(_)) => report.taken += 1,
            (req, resp) => report.failures.push(format!("p{}: {req} answered {resp}", o.pid)),
        }
    }
    for o in &ops {
        if let (OpRequest::Take, OpResponse::Value(v)) = (o.request, o.response) {
            if let Some(first) = taken.insert(v, o) {
                report
                    .failures
                    .push(format!("value {v} taken twice (p{} and p{})", first.pid, o.pid));
            }
            match inserted.get(&v) {
                None => report
                    .failures
                    .push(format!("p{} took {v}, which no successful Insert added", o.pid)),
                Some(i) if i.invoke > o.complete => report
                    .failures
                    .push(format!("p{} took {v} before its Insert began", o.pid)),
                Some(_) => {}
            }
        }
    }
    // Each round starts and ends quiescent, so its operations form a
    // history starting from the bag's contents after the previous round.
    let mut contents: BTreeMap<u64, usize> = BTreeMap::new();
    let mut start = 0;
    for round in 0..rounds {
        let end = start + ops[start..].iter().take_while(|o| o.round == round).count();
        let window = &ops[start..end];
        start = end;
        if round % cfg.window_every == 0 && !window.is_empty() {
            let items: Vec<u64> = contents.iter().flat_map(|(&v, &k)| std::iter::repeat_n(v, k)).collect();
            let initial = SpecState::from_items(spec, items);
            match window_history(window) {
                Ok(h) => match linearizable(&h, spec, &initial, 1_000_000) {
                    LinVerdict::Linearizable(_) => report.windows_checked += 1,
                    LinVerdict::NotLinearizable => report
                        .failures
                        .push(format!("round {round} is not linearizable from {:?}", initial.items())),
                    LinVerdict::Inconclusive { .. } => report
                        .failures
                        .push(format!("round {round}: linearizability check inconclusive")),
                },
                Err(e) => report.failures.push(format!("round {round}: {e}")),
            }
        }
        // A Take may overlap, and sort before, the Insert it consumed.
        for o in window {
            if let (OpRequest::Insert(v), OpResponse::Ok) = (o.request, o.response) {
                *contents.entry(v).or_default() += 1;
            }
        }
        for o in window {
            if let (OpRequest::Take, OpResponse::Value(v)) = (o.request, o.response) {
                if let Some(k) = contents.get_mut(&v) {
                    *k -= 1;
                    if *k == 0 {
                        contents.remove(&v);
                    }
                }
            }
        }
    }
    report
}

fn window_history(window: &[StressOp]) -> Result<History> {
    let mut seq_of: HashMap<Pid, usize> = HashMap::new();
    let ops = window
        .iter()
        .map(|o| {
            let k = seq_of.entry(o.pid).or_default();
            *k += 1;
            HistOp {
                pid: o.pid,
                op_seq: *k - 1,
                request: o.request,
                response: Some(o.response),
            }
        })
        .collect();
    let preds = window
        .iter()
        .map(|o| {
            window
                .iter()
                .enumerate()
                .filter(|(_, p)| p.complete < o.invoke)
                .fold(0u64, |m, (j, _)| m | 1 << j)
        })
        .collect();
    History::new(ops, preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        for (alg, n, b) in [
            (AlgorithmId::UnboundedSl, 3, 1),
            (AlgorithmId::Sl1b, 2, 1),
            (AlgorithmId::Wf1b, 2, 1),
            (AlgorithmId::SlBb, 2, 2),
        ] {
            let r = stress(&StressConfig::new(alg, n, b, 600, 7)).unwrap();
            assert!(r.passed(), "{alg}: {:?}", r.failures);
            assert!(r.ops >= 600);
        }
    }

    #[test]
    fn checker_catches_a_duplicate_take() {
        let op = |pid, request, response, invoke, complete| StressOp {
            pid,
            round: 0,
            request,
            response,
            invoke,
            complete,
            steps: 1,
        };
        let cfg = StressConfig::new(AlgorithmId::UnboundedSl, 3, 1, 3, 0);
        let ops = vec![
            op(0, OpRequest::Insert(64), OpResponse::Ok, 0, 1),
            op(1, OpRequest::Take, OpResponse::Value(64), 2, 3),
            op(2, OpRequest::Take, OpResponse::Value(64), 4, 5),
        ];
        let r = check(&cfg, ops, 1);
        assert!(r.failures.iter().any(|f| f.contains("taken twice")));
        assert!(r.failures.iter().any(|f| f.contains("not linearizable")));
    }

    #[test]
    fn take_overlapping_its_insert_leaves_the_bag_empty() {
        let op = |pid, round, request, response, invoke, complete| StressOp {
            pid,
            round,
            request,
            response,
            invoke,
            complete,
            steps: 1,
        };
        let cfg = StressConfig::new(AlgorithmId::UnboundedSl, 2, 1, 4, 0);
        let ops = vec![
            op(1, 0, OpRequest::Take, OpResponse::Value(64), 0, 5),
            op(0, 0, OpRequest::Insert(64), OpResponse::Ok, 1, 2),
            op(0, 1, OpRequest::Take, OpResponse::Empty, 6, 7),
            op(1, 1, OpRequest::Take, OpResponse::Empty, 8, 9),
        ];
        let r = check(&cfg, ops, 2);
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.windows_checked, 2);
    }
}
