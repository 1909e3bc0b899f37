//! Command-line front end. Every run prints a human-readable summary and
//! ends with `VERDICT <pass|fail|inconclusive> traces=<k> nodes=<m>`.
//!
//! Exit codes: 0 pass, 1 violation found (evidence written to the output
//! path), 2 usage or parse error, 3 inconclusive.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::algorithms::{AlgorithmId, ChooserPolicy};
use crate::error::{Error, Result};
use crate::sim::{Bounds, Trace, Workload};
use crate::slcheck::{
    check_trace, counterexample_fixture, find_sl_violation, linearizable_exhaustive, sl_frontier_at,
    validate_exhaustive, wait_free_bound, FinderOutcome, FixtureId, SlWitness, Violation,
};
use crate::specs::Spec;
use crate::stress::{stress, StressConfig};

#[derive(Parser, Clone, Debug, PartialEq, Eq)]
#[command(
    name = "slbag",
    version,
    about = "Explore, validate and stress concurrent bag algorithms"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Eq)]
pub enum Command {
    /// Check that every execution of a workload is linearizable.
    Explore(ModelArgs),
    /// Check linearization rules, lemmas and loop progress on every
    /// execution, then search for a strong-linearizability violation.
    Validate(ModelArgs),
    /// Re-execute a trace or witness file and re-check it.
    Replay(ReplayArgs),
    /// Run on native atomics with one thread per process.
    Stress(StressArgs),
    /// Rebuild and check one of the known counterexamples.
    Counterexamples(CounterexampleArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Eq)]
pub struct ModelArgs {
    #[arg(long)]
    pub algorithm: AlgorithmId,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub b: usize,
    /// Operations per process, e.g. `p0:I1,I2;p1:T;p2:T`.
    #[arg(long)]
    pub workload: String,
    /// bag, bbag or queue; defaults to the algorithm's own type.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 3)]
    pub max_loop_iters: u32,
    /// Limit on distinct explored states.
    #[arg(long, env = "SLBAG_NODE_CEILING", default_value_t = 200_000_000)]
    pub node_ceiling: u64,
    /// smallest, random or script:<i,j,...>
    #[arg(long, default_value = "smallest")]
    pub chooser: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write a violating trace or witness.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Eq)]
pub struct ReplayArgs {
    pub file: PathBuf,
    /// Overrides the specification recorded in the file.
    #[arg(long)]
    pub spec: Option<String>,
}

#[derive(Args, Clone, Debug, PartialEq, Eq)]
pub struct StressArgs {
    #[arg(long)]
    pub algorithm: AlgorithmId,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub b: usize,
    #[arg(long, default_value_t = 10_000)]
    pub ops: usize,
    #[arg(long, default_value_t = 2)]
    pub per_round: usize,
    /// Check every k-th round's window for linearizability.
    #[arg(long, default_value_t = 1)]
    pub window_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Eq)]
pub struct CounterexampleArgs {
    /// s3, s41 or s52
    #[arg(long)]
    pub which: FixtureId,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn token(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// What a command found, before it is printed.
struct Outcome {
    verdict: Verdict,
    traces: u64,
    nodes: u64,
}

impl ModelArgs {
    fn workload(&self) -> Result<Workload> {
        let chooser = ChooserPolicy::parse(&self.chooser, self.seed)?;
        Workload::parse(self.algorithm, self.n, self.b, chooser, &self.workload)
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            max_steps: self.max_steps,
            max_loop_iters: self.max_loop_iters,
            node_ceiling: self.node_ceiling,
        }
    }

    fn spec(&self) -> Result<Spec> {
        resolve_spec(self.spec.as_deref(), self.algorithm, self.b)
    }

    fn argv(&self) -> Vec<String> {
        let mut v = vec![
            "--algorithm".into(),
            self.algorithm.token().into(),
            "--n".into(),
            self.n.to_string(),
            "--b".into(),
            self.b.to_string(),
            "--workload".into(),
            self.workload.clone(),
        ];
        if let Some(s) = &self.spec {
            v.extend(["--spec".into(), s.clone()]);
        }
        v.extend([
            "--max-steps".into(),
            self.max_steps.to_string(),
            "--max-loop-iters".into(),
            self.max_loop_iters.to_string(),
            "--node-ceiling".into(),
            self.node_ceiling.to_string(),
            "--chooser".into(),
            self.chooser.clone(),
            "--seed".into(),
            self.seed.to_string(),
        ]);
        if let Some(o) = &self.out {
            v.extend(["--out".into(), o.display().to_string()]);
        }
        v
    }
}

impl RunConfig {
    /// The arguments that parse back to this configuration.
    pub fn to_argv(&self) -> Vec<String> {
        let mut v = vec!["slbag".to_string()];
        match &self.command {
            Command::Explore(m) => {
                v.push("explore".into());
                v.extend(m.argv());
            }
            Command::Validate(m) => {
                v.push("validate".into());
                v.extend(m.argv());
            }
            Command::Replay(r) => {
                v.extend(["replay".into(), r.file.display().to_string()]);
                if let Some(s) = &r.spec {
                    v.extend(["--spec".into(), s.clone()]);
                }
            }
            Command::Stress(s) => v.extend([
                "stress".into(),
                "--algorithm".into(),
                s.algorithm.token().into(),
                "--n".into(),
                s.n.to_string(),
                "--b".into(),
                s.b.to_string(),
                "--ops".into(),
                s.ops.to_string(),
                "--per-round".into(),
                s.per_round.to_string(),
                "--window-every".into(),
                s.window_every.to_string(),
                "--seed".into(),
                s.seed.to_string(),
            ]),
            Command::Counterexamples(c) => {
                v.extend(["counterexamples".into(), "--which".into(), c.which.token().into()]);
                if let Some(o) = &c.out {
                    v.extend(["--out".into(), o.display().to_string()]);
                }
            }
        }
        v
    }
}

fn resolve_spec(token: Option<&str>, algorithm: AlgorithmId, b: usize) -> Result<Spec> {
    let capacity = algorithm.capacity(b).unwrap_or(b);
    match token {
        Some(t) if t.contains(':') => Spec::from_str(t),
        Some(t) => Spec::parse(t, capacity),
        None => Ok(match algorithm.capacity(b) {
            Some(c) => Spec::BoundedBag(c),
            None => Spec::Bag,
        }),
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn default_out(name: &str) -> PathBuf {
    PathBuf::from(name)
}

fn violation_text(trace: &Trace, spec: Spec, v: &Violation) -> String {
    let mut s = trace.to_text();
    s.push_str(&format!("# {v}\n"));
    s.push_str(&format!("VIOLATION spec={} kind={}\n", spec_token(spec), v.kind));
    s
}

fn spec_token(spec: Spec) -> String {
    match spec {
        Spec::BoundedBag(b) => format!("bbag:{b}"),
        s => s.token().to_string(),
    }
}

fn explore_cmd(m: &ModelArgs, out: &mut dyn Write) -> Result<Outcome> {
    let workload = m.workload()?;
    let spec = m.spec()?;
    let bounds = m.bounds();
    writeln!(
        out,
        "explore {} n={} b={} workload={} spec={spec}",
        m.algorithm, m.n, m.b, workload
    )?;
    let (bad, stats) = linearizable_exhaustive(&workload, spec, &bounds)?;
    writeln!(
        out,
        "executions: {} ({} truncated), tree nodes: {}, distinct states: {}, deepest trace: {}",
        stats.traces, stats.truncated, stats.nodes, stats.states, stats.max_depth
    )?;
    if workload.algorithm == AlgorithmId::Wf1b {
        let (bound, _) = wait_free_bound(&workload, &bounds)?;
        writeln!(
            out,
            "most steps in one operation: Insert {}, Take {}",
            bound.insert, bound.take
        )?;
    }
    let verdict = match bad {
        Some(trace) => {
            let path = m
                .out
                .clone()
                .unwrap_or_else(|| default_out("slbag-nonlinearizable.trace"));
            write_file(&path, &trace.to_text())?;
            writeln!(out, "a non-linearizable execution was written to {}", path.display())?;
            Verdict::Fail
        }
        None => {
            writeln!(out, "every complete execution is linearizable")?;
            Verdict::Pass
        }
    };
    Ok(Outcome {
        verdict,
        traces: stats.traces,
        nodes: stats.nodes,
    })
}

fn validate_cmd(m: &ModelArgs, out: &mut dyn Write) -> Result<Outcome> {
    let workload = m.workload()?;
    let spec = m.spec()?;
    let bounds = m.bounds();
    writeln!(
        out,
        "validate {} n={} b={} workload={} spec={spec}",
        m.algorithm, m.n, m.b, workload
    )?;
    let report = validate_exhaustive(&workload, spec, &bounds)?;
    let stats = report.stats;
    writeln!(
        out,
        "executions: {} ({} truncated), tree nodes: {}, distinct states: {}",
        stats.traces, stats.truncated, stats.nodes, stats.states
    )?;
    let path = m.out.clone();
    if let Some((trace, v)) = &report.violation {
        let path = path.unwrap_or_else(|| default_out("slbag-violation.trace"));
        write_file(&path, &violation_text(trace, spec, v))?;
        writeln!(out, "{v}")?;
        writeln!(out, "the violating execution was written to {}", path.display())?;
        return Ok(Outcome {
            verdict: Verdict::Fail,
            traces: stats.traces,
            nodes: stats.nodes,
        });
    }
    writeln!(
        out,
        "linearization rules, lemmas and loop progress hold on every execution"
    )?;
    let (found, fstats) = find_sl_violation(&workload, spec, &bounds, &[])?;
    let verdict = match found {
        FinderOutcome::None => {
            writeln!(
                out,
                "strong-linearizability search: NONE ({} linearization sets)",
                fstats.sets
            )?;
            Verdict::Pass
        }
        FinderOutcome::Violation(w) => {
            let path = path.unwrap_or_else(|| default_out("slbag-sl.witness"));
            write_file(&path, &w.to_text()?)?;
            writeln!(out, "strong-linearizability search: violation")?;
            write!(out, "{}", w.summary())?;
            writeln!(out, "witness written to {}", path.display())?;
            Verdict::Fail
        }
    };
    Ok(Outcome {
        verdict,
        traces: stats.traces,
        nodes: stats.nodes,
    })
}

fn replay_cmd(r: &ReplayArgs, out: &mut dyn Write) -> Result<Outcome> {
    let text = std::fs::read_to_string(&r.file).map_err(|e| Error::Io(format!("{}: {e}", r.file.display())))?;
    let (trace, extra) = Trace::parse_with_extra(&text)?;
    if extra.iter().any(|(_, l)| l.starts_with("WITNESS")) {
        let w = SlWitness::parse(&text)?;
        let holds = w.verify()?;
        writeln!(out, "witness for {} over {} branches", w.spec, w.branches.len())?;
        write!(out, "{}", w.summary())?;
        writeln!(
            out,
            "{}",
            if holds {
                "the witness holds"
            } else {
                "the witness does not hold"
            }
        )?;
        return Ok(Outcome {
            verdict: if holds { Verdict::Fail } else { Verdict::Pass },
            traces: 1 + w.branches.len() as u64,
            nodes: (w.alpha.len() + w.branches.iter().map(Vec::len).sum::<usize>()) as u64,
        });
    }
    let mut recorded_spec = None;
    for (ln, l) in &extra {
        let mut toks = l.split_whitespace();
        if toks.next() != Some("VIOLATION") {
            return Err(Error::parse(*ln, format!("unexpected record `{l}`")));
        }
        for t in toks {
            if let Some(s) = t.strip_prefix("spec=") {
                recorded_spec = Some(s.to_string());
            }
        }
    }
    let spec = resolve_spec(r.spec.as_deref().or(recorded_spec.as_deref()), trace.algorithm, trace.b)?;
    let found = check_trace(&trace, spec)?;
    writeln!(
        out,
        "replayed {} events of {} n={} b={}; spec={spec}",
        trace.len(),
        trace.algorithm,
        trace.n,
        trace.b
    )?;
    let verdict = match found {
        Some(v) => {
            writeln!(out, "{v}")?;
            Verdict::Fail
        }
        None => {
            writeln!(out, "all checks hold on this trace")?;
            Verdict::Pass
        }
    };
    Ok(Outcome {
        verdict,
        traces: 1,
        nodes: trace.len() as u64,
    })
}

fn stress_cmd(s: &StressArgs, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = StressConfig {
        per_round: s.per_round,
        window_every: s.window_every,
        ..StressConfig::new(s.algorithm, s.n, s.b, s.ops, s.seed)
    };
    let r = stress(&cfg)?;
    writeln!(
        out,
        "stress {} n={} b={}: {} operations in {} rounds; {} values taken, {} EMPTY, {} FULL",
        s.algorithm, s.n, s.b, r.ops, r.rounds, r.taken, r.empty, r.full
    )?;
    writeln!(
        out,
        "windows checked: {}, most steps in one operation: {}",
        r.windows_checked, r.max_steps
    )?;
    for f in &r.failures {
        writeln!(out, "failure: {f}")?;
    }
    Ok(Outcome {
        verdict: if r.passed() { Verdict::Pass } else { Verdict::Fail },
        traces: r.rounds as u64,
        nodes: r.ops as u64,
    })
}

fn counterexample_cmd(c: &CounterexampleArgs, out: &mut dyn Write) -> Result<Outcome> {
    let f = counterexample_fixture(c.which)?;
    let w = f.witness()?;
    let holds = w.verify()?;
    let frontier = sl_frontier_at(&f.workload, f.spec, &Bounds::default(), &f.alpha)?.is_some();
    writeln!(
        out,
        "counterexample {}: {} workload={} spec={}",
        c.which, f.workload.algorithm, f.workload, f.spec
    )?;
    write!(out, "{}", w.summary())?;
    writeln!(
        out,
        "branch sets disjoint: {holds}; no linearization of alpha extends to every execution below it: {frontier}"
    )?;
    let path = c
        .out
        .clone()
        .unwrap_or_else(|| default_out(&format!("slbag-{}.witness", c.which)));
    write_file(&path, &w.to_text()?)?;
    writeln!(out, "witness written to {}", path.display())?;
    Ok(Outcome {
        verdict: if holds && frontier {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        traces: 1 + w.branches.len() as u64,
        nodes: (w.alpha.len() + w.branches.iter().map(Vec::len).sum::<usize>()) as u64,
    })
}

fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    match &cfg.command {
        Command::Explore(m) => explore_cmd(m, out),
        Command::Validate(m) => validate_cmd(m, out),
        Command::Replay(r) => replay_cmd(r, out),
        Command::Stress(s) => stress_cmd(s, out),
        Command::Counterexamples(c) => counterexample_cmd(c, out),
    }
}

/// Runs the command line `argv` (program name first), writing the report
/// to `out`. Returns the exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(out, "{e}");
            if code == 2 {
                let _ = writeln!(out, "VERDICT inconclusive traces=0 nodes=0");
            }
            return code;
        }
    };
    let (code, verdict, traces, nodes) = match execute(&cfg, out) {
        Ok(o) => {
            let code = match o.verdict {
                Verdict::Pass => 0,
                Verdict::Fail => 1,
                Verdict::Inconclusive => 3,
            };
            (code, o.verdict, o.traces, o.nodes)
        }
        Err(Error::Ceiling { ceiling, nodes }) => {
            let _ = writeln!(out, "stopped: more than {ceiling} distinct states");
            (3, Verdict::Inconclusive, 0, nodes)
        }
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            (2, Verdict::Inconclusive, 0, 0)
        }
    };
    let _ = writeln!(out, "VERDICT {} traces={traces} nodes={nodes}", verdict.token());
    code
}
