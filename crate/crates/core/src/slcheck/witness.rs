use std::fmt::Write as _;
use std::sync::Arc;

use super::finder::{extendable, sl_frontier_at, Lin, OpNumbering};
use crate::error::{Error, Result};
use crate::primitives::Pid;
use crate::sim::{run, Bounds, Sim, Trace, Workload};
use crate::specs::Spec;

/// How the branch sets of a witness are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessMode {
    /// `L_i`: linearizations of α's history that are a prefix of some
    /// linearization of the history of α·β_i.
    Plain,
    /// `L_i`: linearizations of α's history from which a chain of
    /// prefix-extending linearizations reaches the end of α·β_i through
    /// every intermediate node.
    Chain,
    /// No small set of branches refutes every choice at α on its own; the
    /// refutation needs the whole subtree (checked by re-running the
    /// finder rooted at α).
    Tree,
}

impl WitnessMode {
    fn token(self) -> &'static str {
        match self {
            WitnessMode::Plain => "plain",
            WitnessMode::Chain => "chain",
            WitnessMode::Tree => "tree",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(WitnessMode::Plain),
            "chain" => Ok(WitnessMode::Chain),
            "tree" => Ok(WitnessMode::Tree),
            _ => Err(Error::usage(format!("unknown witness mode `{s}`"))),
        }
    }
}

/// Evidence that no prefix-preserving linearization function exists: a
/// prefix α and extensions β_i such that the sets of linearizations of α
/// compatible with each α·β_i have an empty intersection.
#[derive(Clone, Debug)]
pub struct SlWitness {
    pub workload: Workload,
    pub spec: Spec,
    pub bounds: Bounds,
    pub alpha: Vec<Pid>,
    /// Schedules continuing α.
    pub branches: Vec<Vec<Pid>>,
    pub mode: WitnessMode,
    /// Linearizations of α's history.
    pub alpha_lins: Vec<Lin>,
    /// For each branch, indices into `alpha_lins` compatible with it.
    pub sets: Vec<Vec<usize>>,
}

fn spec_token(spec: Spec) -> String {
    match spec {
        Spec::BoundedBag(b) => format!("bbag:{b}"),
        s => s.token().to_string(),
    }
}

fn sim_at(workload: &Workload, schedule: &[Pid]) -> Result<Sim> {
    let mut sim = Sim::new(Arc::new(workload.clone()))?;
    for &p in schedule {
        if p >= sim.processes() || !sim.can_step(p) {
            return Err(Error::usage(format!("schedule names process {p}, which cannot step")));
        }
        sim.step(p)?;
    }
    Ok(sim)
}

/// Indices of `alpha_lins` that are a prefix of some member of `set`.
fn compatible(alpha_lins: &[Lin], set: &[Lin]) -> Vec<usize> {
    (0..alpha_lins.len())
        .filter(|&i| extendable(&alpha_lins[i], set))
        .collect()
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

/// Upper bound on the nodes examined when looking for branches; the plain
/// pass may use half. Branches found within the budget are exact, the
/// budget only limits how many are tried.
const LEAF_LIMIT: usize = 200_000;

struct Leaves<'a> {
    numbering: &'a OpNumbering,
    spec: Spec,
    bounds: Bounds,
    alpha_lins: &'a [Lin],
    /// Distinct plain sets with one representative schedule each.
    plain: Vec<(Vec<usize>, Vec<Pid>)>,
    seen: usize,
}

impl Leaves<'_> {
    fn walk(&mut self, sim: Sim, path: &mut Vec<Pid>) -> Result<()> {
        if self.seen >= LEAF_LIMIT {
            return Ok(());
        }
        self.seen += 1;
        let enabled = sim.enabled(&self.bounds);
        if enabled.is_empty() {
            let lins = self.numbering.linearizations(&sim, self.spec)?;
            let set = compatible(self.alpha_lins, &lins);
            if !self.plain.iter().any(|(s, _)| *s == set) {
                self.plain.push((set, path.clone()));
            }
            return Ok(());
        }
        for p in enabled {
            let mut child = sim.clone();
            child.step(p)?;
            path.push(p);
            self.walk(child, path)?;
            path.pop();
        }
        Ok(())
    }

    /// Chain sets: for each distinct set over the node's linearizations,
    /// one representative schedule from the node to a leaf.
    fn chain(&mut self, sim: Sim) -> Result<Vec<(Vec<Lin>, Vec<Pid>)>> {
        self.seen += 1;
        let lins = self.numbering.linearizations(&sim, self.spec)?;
        let enabled = sim.enabled(&self.bounds);
        if enabled.is_empty() {
            return Ok(vec![(lins, Vec::new())]);
        }
        let mut out: Vec<(Vec<Lin>, Vec<Pid>)> = Vec::new();
        for p in enabled {
            if self.seen >= 2 * LEAF_LIMIT {
                break;
            }
            let mut child = sim.clone();
            child.step(p)?;
            for (set, mut path) in self.chain(child)? {
                let mine: Vec<Lin> = lins.iter().filter(|l| extendable(l, &set)).cloned().collect();
                if !out.iter().any(|(s, _)| *s == mine) {
                    path.insert(0, p);
                    out.push((mine, path));
                }
            }
        }
        Ok(out)
    }
}

/// Finds branches below `alpha` whose compatible sets do not intersect.
pub(crate) fn build_witness(workload: &Workload, spec: Spec, bounds: &Bounds, alpha: &[Pid]) -> Result<SlWitness> {
    let numbering = OpNumbering::new(workload)?;
    let sim = sim_at(workload, alpha)?;
    let alpha_lins = numbering.linearizations(&sim, spec)?;
    let mut leaves = Leaves {
        numbering: &numbering,
        spec,
        bounds: *bounds,
        alpha_lins: &alpha_lins,
        plain: Vec::new(),
        seen: 0,
    };
    leaves.walk(sim.clone(), &mut Vec::new())?;
    let base = |mode, branches: Vec<Vec<Pid>>, sets: Vec<Vec<usize>>| SlWitness {
        workload: workload.clone(),
        spec,
        bounds: *bounds,
        alpha: alpha.to_vec(),
        branches,
        mode,
        alpha_lins: alpha_lins.clone(),
        sets,
    };
    if let Some((a, b)) = disjoint_pair(&leaves.plain) {
        let (pa, pb) = (&leaves.plain[a], &leaves.plain[b]);
        return Ok(base(
            WitnessMode::Plain,
            vec![pa.1.clone(), pb.1.clone()],
            vec![pa.0.clone(), pb.0.clone()],
        ));
    }
    let chain: Vec<(Vec<usize>, Vec<Pid>)> = leaves
        .chain(sim)?
        .into_iter()
        .map(|(set, path)| (compatible(&alpha_lins, &set), path))
        .collect();
    if let Some((a, b)) = disjoint_pair(&chain) {
        let (pa, pb) = (&chain[a], &chain[b]);
        return Ok(base(
            WitnessMode::Chain,
            vec![pa.1.clone(), pb.1.clone()],
            vec![pa.0.clone(), pb.0.clone()],
        ));
    }
    if let Some(picked) = greedy_cover(&chain, alpha_lins.len()) {
        let branches = picked.iter().map(|&i| chain[i].1.clone()).collect();
        let sets = picked.iter().map(|&i| chain[i].0.clone()).collect();
        return Ok(base(WitnessMode::Chain, branches, sets));
    }
    Ok(base(WitnessMode::Tree, Vec::new(), Vec::new()))
}

fn disjoint_pair(sets: &[(Vec<usize>, Vec<Pid>)]) -> Option<(usize, usize)> {
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if intersect(&sets[i].0, &sets[j].0).is_empty() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Branches whose sets have an empty common intersection, chosen greedily.
fn greedy_cover(sets: &[(Vec<usize>, Vec<Pid>)], universe: usize) -> Option<Vec<usize>> {
    let mut current: Vec<usize> = (0..universe).collect();
    let mut picked = Vec::new();
    while !current.is_empty() {
        let (best, next) = sets
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (i, intersect(&current, s)))
            .min_by_key(|(_, n)| n.len())?;
        if next.len() == current.len() {
            return None;
        }
        picked.push(best);
        current = next;
    }
    Some(picked)
}

impl SlWitness {
    /// A witness with explicit branches, its sets computed in `mode`.
    pub fn from_branches(
        workload: &Workload,
        spec: Spec,
        bounds: &Bounds,
        alpha: &[Pid],
        branches: Vec<Vec<Pid>>,
        mode: WitnessMode,
    ) -> Result<Self> {
        let numbering = OpNumbering::new(workload)?;
        let alpha_lins = numbering.linearizations(&sim_at(workload, alpha)?, spec)?;
        let mut w = SlWitness {
            workload: workload.clone(),
            spec,
            bounds: *bounds,
            alpha: alpha.to_vec(),
            branches,
            mode,
            alpha_lins,
            sets: Vec::new(),
        };
        w.sets = w.compute_sets()?;
        Ok(w)
    }

    fn compute_sets(&self) -> Result<Vec<Vec<usize>>> {
        let numbering = OpNumbering::new(&self.workload)?;
        let mut out = Vec::new();
        for beta in &self.branches {
            let mut schedule = self.alpha.clone();
            let mut sims = vec![sim_at(&self.workload, &schedule)?];
            for &p in beta {
                schedule.push(p);
                let mut next = sims.last().expect("non-empty").clone();
                if p >= next.processes() || !next.can_step(p) {
                    return Err(Error::usage(format!("branch names process {p}, which cannot step")));
                }
                next.step(p)?;
                sims.push(next);
            }
            let last = sims.last().expect("non-empty");
            let mut set = numbering.linearizations(last, self.spec)?;
            if self.mode == WitnessMode::Chain {
                for s in sims[1..sims.len() - 1].iter().rev() {
                    set = numbering
                        .linearizations(s, self.spec)?
                        .into_iter()
                        .filter(|l| extendable(l, &set))
                        .collect();
                }
            }
            out.push(compatible(&self.alpha_lins, &set));
        }
        Ok(out)
    }

    /// Re-derives every set from the executions and checks that no
    /// linearization of α is compatible with all branches.
    pub fn verify(&self) -> Result<bool> {
        if self.mode == WitnessMode::Tree {
            return Ok(sl_frontier_at(&self.workload, self.spec, &self.bounds, &self.alpha)?.is_some());
        }
        if self.branches.len() < 2 {
            return Ok(false);
        }
        let sets = self.compute_sets()?;
        if sets != self.sets {
            return Ok(false);
        }
        let mut common: Vec<usize> = (0..self.alpha_lins.len()).collect();
        for s in &sets {
            common = intersect(&common, s);
        }
        Ok(common.is_empty())
    }

    pub fn alpha_trace(&self) -> Result<Trace> {
        run(&self.workload, &self.alpha)
    }

    /// The trace of α followed by branch `i`.
    pub fn branch_trace(&self, i: usize) -> Result<Trace> {
        let mut s = self.alpha.clone();
        s.extend(&self.branches[i]);
        run(&self.workload, &s)
    }

    /// Renders a linearization of α with operation names.
    pub fn describe_lin(&self, lin: &Lin) -> String {
        let numbering = OpNumbering::new(&self.workload).expect("validated workload");
        let parts: Vec<String> = lin
            .iter()
            .map(|&e| {
                let (op, r) = numbering.decode(e);
                let (pid, k) = numbering.op_of(op);
                format!("p{pid}.{k}:{}/{r}", self.workload.ops[pid][k])
            })
            .collect();
        format!("[{}]", parts.join(", "))
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "prefix alpha: {} steps, schedule {:?}", self.alpha.len(), self.alpha).unwrap();
        writeln!(s, "linearizations of alpha: {}", self.alpha_lins.len()).unwrap();
        for (i, (b, set)) in self.branches.iter().zip(&self.sets).enumerate() {
            writeln!(s, "branch {}: {:?}", i + 1, b).unwrap();
            writeln!(s, "  compatible linearizations of alpha: {}", set.len()).unwrap();
            for &k in set.iter().take(6) {
                writeln!(s, "    {}", self.describe_lin(&self.alpha_lins[k])).unwrap();
            }
            if set.len() > 6 {
                writeln!(s, "    ... {} more", set.len() - 6).unwrap();
            }
        }
        if self.mode == WitnessMode::Tree {
            writeln!(
                s,
                "no finite set of branches isolates the contradiction; re-check by searching from alpha"
            )
            .unwrap();
        }
        s
    }

    /// Trace of α·β1 plus the witness section.
    pub fn to_text(&self) -> Result<String> {
        let trace = if self.branches.is_empty() {
            self.alpha_trace()?
        } else {
            self.branch_trace(0)?
        };
        let mut s = trace.to_text();
        writeln!(
            s,
            "WITNESS alpha={} spec={} mode={} max_steps={} max_loop_iters={} workload={}",
            self.alpha.len(),
            spec_token(self.spec),
            self.mode.token(),
            self.bounds.max_steps,
            self.bounds.max_loop_iters,
            self.workload
        )
        .unwrap();
        for (i, b) in self.branches.iter().enumerate() {
            let pids: Vec<String> = b.iter().map(Pid::to_string).collect();
            writeln!(s, "BRANCH {} {}", i + 1, pids.join(",")).unwrap();
        }
        Ok(s)
    }

    /// Parses a witness file and checks that its trace is α·β1.
    pub fn parse(text: &str) -> Result<Self> {
        let (trace, extra) = Trace::parse_with_extra(text)?;
        let mut fields = None;
        let mut branches: Vec<(usize, Vec<Pid>)> = Vec::new();
        for (ln, line) in &extra {
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("WITNESS") => {
                    let mut map = std::collections::HashMap::new();
                    for t in toks {
                        let (k, v) = t
                            .split_once('=')
                            .ok_or_else(|| Error::parse(*ln, format!("expected key=value, got `{t}`")))?;
                        map.insert(k.to_string(), v.to_string());
                    }
                    fields = Some((*ln, map));
                }
                Some("BRANCH") => {
                    let idx: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::parse(*ln, "BRANCH needs an index"))?;
                    let pids = toks
                        .next()
                        .unwrap_or("")
                        .split(',')
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse().map_err(|_| Error::parse(*ln, format!("bad process `{t}`"))))
                        .collect::<Result<Vec<Pid>>>()?;
                    branches.push((idx, pids));
                }
                _ => return Err(Error::parse(*ln, format!("unexpected record `{line}`"))),
            }
        }
        let (ln, map) = fields.ok_or_else(|| Error::parse(0, "missing WITNESS record"))?;
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::parse(ln, format!("WITNESS lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::parse(ln, format!("bad `{k}`"))) };
        let spec: Spec = get("spec")?.parse()?;
        let mode = WitnessMode::parse(&get("mode")?)?;
        let bounds = Bounds {
            max_steps: num("max_steps")?,
            max_loop_iters: num("max_loop_iters")? as u32,
            ..Bounds::default()
        };
        let workload = Workload::parse(
            trace.algorithm,
            trace.n,
            trace.b,
            trace.chooser.clone(),
            &get("workload")?,
        )?;
        let alpha_len = num("alpha")?;
        let schedule = trace.schedule();
        if alpha_len > schedule.len() {
            return Err(Error::parse(ln, "alpha is longer than the trace"));
        }
        branches.sort_by_key(|(i, _)| *i);
        let branches: Vec<Vec<Pid>> = branches.into_iter().map(|(_, b)| b).collect();
        let alpha = schedule[..alpha_len].to_vec();
        if let Some(b1) = branches.first() {
            if schedule[alpha_len..] != b1[..] {
                return Err(Error::parse(ln, "the trace is not alpha followed by branch 1"));
            }
        }
        let rerun = run(&workload, &schedule)?;
        if rerun.to_text() != trace.to_text() {
            let first = rerun
                .events
                .iter()
                .zip(&trace.events)
                .find(|(a, b)| a.to_line() != b.to_line())
                .map(|(a, b)| (a.seq, b.to_line(), a.to_line()));
            return Err(match first {
                Some((seq, expected, actual)) => Error::Divergence { seq, expected, actual },
                None => Error::Divergence {
                    seq: trace.len(),
                    expected: "recorded operations".into(),
                    actual: "different operation records".into(),
                },
            });
        }
        SlWitness::from_branches(&workload, spec, &bounds, &alpha, branches, mode)
    }
}
