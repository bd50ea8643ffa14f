//! Command-line front end: `awe run` and `awe check`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::trace::{read_jsonl, write_jsonl, TraceEvent};
use crate::sim::{explore, run, Policy, Scenario, Simulation};
use crate::verify::{verify_trace, OpCounts, TraceReport};

#[derive(Debug, Parser)]
#[command(name = "awe", version, about = "Simulate and check the AWE erasure-coded register")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a scenario over one or more seeds and check every trace.
    Run(RunArgs),
    /// Run all checks on a stored trace.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario JSON document.
    #[arg(long)]
    pub scenario: PathBuf,
    /// First seed; defaults to the scenario's own.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    /// Output directory for traces and `summary.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Explore every schedule up to the scenario's depth bound instead.
    #[arg(long)]
    pub exhaustive: bool,
    /// Override the scenario's fairness bound.
    #[arg(long)]
    pub fairness_bound: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// JSON-lines trace file.
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_digest: String,
    pub seed: u64,
    pub trace: String,
    pub ops: OpCounts,
    pub linearizable: bool,
    pub wait_free: bool,
    pub amnesic: bool,
    pub bandwidth: bool,
    pub lemmas: bool,
    pub max_fragments_per_node: usize,
    pub runtime_ms: u64,
    pub failures: Vec<String>,
}

impl RunReport {
    fn new(scenario: &Scenario, seed: u64, trace: String, r: &TraceReport, runtime_ms: u64) -> Self {
        RunReport {
            scenario_digest: scenario.digest(),
            seed,
            trace,
            ops: r.ops.clone(),
            linearizable: r.linearizability.linearizable,
            wait_free: r.wait_free,
            amnesic: r.amnesic.within_bound(),
            bandwidth: r.bandwidth_ok,
            lemmas: r.lemma_violations.is_empty() && r.harness_violations.is_empty(),
            max_fragments_per_node: r.amnesic.max_fragments_per_node,
            runtime_ms,
            failures: r.failures(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveSummary {
    pub depth: usize,
    pub executions: usize,
    pub states: usize,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario_digest: String,
    pub passed: bool,
    pub runs: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive: Option<ExhaustiveSummary>,
}

type CliResult<T> = Result<T, String>;

fn load_scenario(args: &RunArgs) -> CliResult<Scenario> {
    let text = fs::read_to_string(&args.scenario).map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let mut s = Scenario::from_json(&text).map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    if let Some(b) = args.fairness_bound {
        s.schedule.fairness = b;
    }
    if args.exhaustive {
        s.schedule.policy = Policy::Exhaustive;
    }
    s.validate().map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    Ok(s)
}

fn write_trace(path: &Path, trace: &[TraceEvent]) -> CliResult<()> {
    let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_jsonl(trace, &mut w).map_err(|e| format!("{}: {e}", path.display()))?;
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

fn run_one(scenario: &Scenario, seed: u64, out: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let s = scenario.with_seed(seed);
    let result = run(&s).map_err(|e| format!("seed {seed}: {e}"))?;
    let name = format!("trace-{seed}.jsonl");
    write_trace(&out.join(&name), &result.trace)?;
    let report = verify_trace(&result.trace).map_err(|e| format!("seed {seed}: {e}"))?;
    Ok(RunReport::new(scenario, seed, name, &report, started.elapsed().as_millis() as u64))
}

fn run_exhaustive(scenario: &Scenario, out: &Path) -> CliResult<ExhaustiveSummary> {
    let sim = Simulation::new(scenario).map_err(|e| e.to_string())?;
    let depth = scenario.schedule.depth;
    let mut saved = 0usize;
    let mut io_error = None;
    let report = explore(sim, depth, scenario.schedule.max_steps, |r| {
        let report = verify_trace(&r.trace).map_err(|e| e.to_string())?;
        if report.passed() {
            return Ok(());
        }
        let name = format!("exhaustive-failure-{saved}.jsonl");
        saved += 1;
        if let Err(e) = write_trace(&out.join(&name), &r.trace) {
            io_error.get_or_insert(e);
        }
        Err(format!("{name}: {}", report.failures().join("; ")))
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = io_error {
        return Err(e);
    }
    Ok(ExhaustiveSummary {
        depth,
        executions: report.executions,
        states: report.states,
        failures: report.failures.into_iter().map(|(path, msg)| format!("after {} choices: {msg}", path.len())).collect(),
    })
}

fn print_table(out: &mut dyn Write, summary: &Summary) -> std::io::Result<()> {
    writeln!(out, "{:>10} {:>6} {:>6} {:>7} {:>5} {:>5} {:>7} {:>5} {:>6} {:>9}", "seed", "writes", "reads", "pending", "lin", "wait", "amnesic", "bw", "lemmas", "max-frags")?;
    let yn = |b: bool| if b { "ok" } else { "FAIL" };
    for r in &summary.runs {
        writeln!(
            out,
            "{:>10} {:>6} {:>6} {:>7} {:>5} {:>5} {:>7} {:>5} {:>6} {:>9}",
            r.seed,
            r.ops.writes,
            r.ops.reads,
            r.ops.pending,
            yn(r.linearizable),
            yn(r.wait_free),
            yn(r.amnesic),
            yn(r.bandwidth),
            yn(r.lemmas),
            r.max_fragments_per_node
        )?;
        for f in &r.failures {
            writeln!(out, "{:>10} {f}", "")?;
        }
    }
    if let Some(x) = &summary.exhaustive {
        writeln!(out, "exhaustive depth {}: {} executions, {} states, {} failures", x.depth, x.executions, x.states, x.failures.len())?;
        for f in &x.failures {
            writeln!(out, "  {f}")?;
        }
    }
    writeln!(out, "{}", if summary.passed { "PASS" } else { "FAIL" })
}

/// Executes the runs and writes traces plus `summary.json`. Returns the
/// process exit code: 0 when every check passed, 1 on a failed check, 2 on
/// invalid input or I/O errors.
pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match try_run(args, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn try_run(args: &RunArgs, out: &mut dyn Write) -> CliResult<bool> {
    let scenario = load_scenario(args)?;
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let exhaustive = scenario.schedule.policy == Policy::Exhaustive;
    let mut summary = Summary { scenario_digest: scenario.digest(), passed: true, runs: Vec::new(), exhaustive: None };
    if exhaustive {
        let x = run_exhaustive(&scenario, &args.out)?;
        summary.passed = x.failures.is_empty();
        summary.exhaustive = Some(x);
    } else {
        let first = args.seed.unwrap_or(scenario.schedule.seed);
        let seeds: Vec<u64> = (0..args.runs).map(|i| first.wrapping_add(i)).collect();
        summary.runs = seeds.par_iter().map(|&s| run_one(&scenario, s, &args.out)).collect::<CliResult<_>>()?;
        summary.passed = summary.runs.iter().all(RunReport::passed);
    }
    let path = args.out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    fs::write(&path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    print_table(out, &summary).map_err(|e| e.to_string())?;
    Ok(summary.passed)
}

/// Checks a stored trace and prints the report as JSON. Exit code 0 when
/// every check passes, 1 otherwise, 2 when the trace cannot be read.
pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let report = File::open(&args.trace)
        .map_err(|e| e.to_string())
        .and_then(|f| read_jsonl(BufReader::new(f)).map_err(|e| e.to_string()))
        .and_then(|t| verify_trace(&t).map_err(|e| e.to_string()));
    match report {
        Ok(r) => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            for f in r.failures() {
                let _ = writeln!(err, "{f}");
            }
            if r.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.trace.display());
            2
        }
    }
}

pub fn main_with(cli: Cli) -> i32 {
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    match &cli.command {
        Command::Run(a) => cmd_run(a, &mut out, &mut err),
        Command::Check(a) => cmd_check(a, &mut out, &mut err),
    }
}
