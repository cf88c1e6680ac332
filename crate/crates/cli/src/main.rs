use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nsbsim::batch::run_batch;
use nsbsim::blocktree::{conformance_check, differential_check, TreeKind};
use nsbsim::bounds::{
    cg_growth_bound, cp_epsilon_condition, cp_failure_bound, cq_epsilon_condition, cq_failure_bound, slot_probs,
    BoundsError, EpsilonCheck, SlotProbs,
};
use nsbsim::config::{ScenarioConfig, SEED_ENV};
use nsbsim::lottery::HonestyMap;
use nsbsim::properties::{run_checks, CheckKind, CheckRecord, CutoffMode};
use nsbsim::trace::Trace;
use nsbsim::world;
use nsbsim::PartyId;

/// Exit status when a checker reports a violation.
const EXIT_VIOLATED: u8 = 1;
/// Exit status for bad input or I/O failure.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "nsbsim", version, about = "Proof-of-stake longest-chain simulator with property oracles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its trace, block list and summary.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the block tree as a DOT graph.
        #[arg(long)]
        dot: bool,
    },
    /// Run a scenario and apply checkers; exits 1 if any verdict is Violated.
    Check {
        config: PathBuf,
        #[command(flatten)]
        checks: CheckArgs,
        /// Directory for trace and report files; nothing is written when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the probability-bound table for a win-rate map.
    Bounds(BoundsArgs),
    /// Run the randomized block-tree conformance harness.
    Conformance {
        #[arg(long = "impl", default_value = "indexed")]
        implementation: TreeKind,
        /// Also require equal answers from this implementation.
        #[arg(long)]
        against: Option<TreeKind>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run a scenario over many master seeds; exits 1 if any seed has a violation.
    Batch {
        config: PathBuf,
        /// Master seeds as `A:B` (half-open) or a comma-separated list.
        #[arg(long, default_value = "0:10")]
        seeds: String,
        #[command(flatten)]
        checks: CheckArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run seeds concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print an example scenario file.
    Example,
}

#[derive(Args)]
struct CheckArgs {
    /// Comma-separated checks: collision, forging, knowledge, super-positions,
    /// growth, quality, cp-all, rollback, or the groups monitors, lemmas, cp, all.
    #[arg(long, default_value = "all")]
    checks: String,
    /// Common-prefix cutoffs, overriding the scenario file.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    cutoff: Option<CutoffArg>,
    /// Slot stride of the growth and common-prefix sweeps.
    #[arg(long)]
    stride: Option<u64>,
    /// Snapshot stride of the quality sweep.
    #[arg(long)]
    quality_stride: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutoffArg {
    Absolute,
    Depth,
}

#[derive(Args)]
struct BoundsArgs {
    /// Win probabilities as `id=q,...`.
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<String>,
    /// Corrupted party ids.
    #[arg(long, value_delimiter = ',')]
    corrupt: Vec<u32>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long = "delta-prime", default_value_t = 0.1)]
    delta_prime: f64,
    /// Cutoff range `A:B` (inclusive).
    #[arg(long = "k-range", default_value = "10:100")]
    k_range: String,
    #[arg(long = "k-step", default_value_t = 10)]
    k_step: u64,
    /// Current slot; defaults to the top of the cutoff range.
    #[arg(long = "sl-now")]
    sl_now: Option<u64>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, out, dot } => cmd_run(&config, &out, dot),
        Cmd::Check { config, checks, out } => cmd_check(&config, &checks, out.as_deref()),
        Cmd::Bounds(args) => cmd_bounds(&args),
        Cmd::Conformance { implementation, against, n, seed, seeds } => {
            cmd_conformance(implementation, against, n, seed, seeds)
        }
        Cmd::Batch { config, seeds, checks, out, parallel } => cmd_batch(&config, &seeds, &checks, &out, parallel),
        Cmd::Example => {
            let mut cfg = ScenarioConfig::honest_only(4, 0.1, 200);
            cfg.parties[3].honest = false;
            println!("{}", cfg.emit());
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|Failure(msg)| {
        eprintln!("error: {msg}");
        ExitCode::from(EXIT_ERROR)
    })
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::from_path(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn simulate(cfg: &ScenarioConfig) -> Result<Trace, Failure> {
    Ok(world::run(&cfg.to_params()?)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn write_trace(dir: &Path, trace: &Trace, dot: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    trace.write_jsonl(BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?))?;
    trace.write_blocks_jsonl(BufWriter::new(fs::File::create(dir.join("blocks.jsonl"))?))?;
    if dot {
        fs::write(dir.join("tree.dot"), trace.to_dot())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a ScenarioConfig,
    seed_override: Option<String>,
    summary: nsbsim::trace::RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<&'a [CheckRecord]>,
}

fn cmd_run(config: &Path, out: &Path, dot: bool) -> CmdResult {
    let cfg = load(config)?;
    let trace = simulate(&cfg)?;
    write_trace(out, &trace, dot)?;
    let report =
        RunReport { config: &cfg, seed_override: std::env::var(SEED_ENV).ok(), summary: trace.summary(), checks: None };
    write_json(&out.join("report.json"), &report)?;
    let s = &report.summary;
    println!(
        "ran {} slots, {} blocks, {} messages; final lengths {:?}",
        s.horizon,
        s.distinct_blocks,
        s.messages_sent,
        s.final_lengths.values().collect::<Vec<_>>()
    );
    Ok(ExitCode::SUCCESS)
}

fn apply_check_args(cfg: &mut ScenarioConfig, args: &CheckArgs) -> Result<Vec<CheckKind>, Failure> {
    if let Some(k) = &args.k {
        cfg.checks.k = k.clone();
    }
    if let Some(c) = args.cutoff {
        cfg.checks.cutoff = match c {
            CutoffArg::Absolute => CutoffMode::Absolute,
            CutoffArg::Depth => CutoffMode::Depth,
        };
    }
    if let Some(s) = args.stride {
        cfg.checks.stride = s;
    }
    if let Some(s) = args.quality_stride {
        cfg.checks.quality_stride = s;
    }
    CheckKind::parse_list(&args.checks).map_err(Failure)
}

fn describe(r: &CheckRecord) -> String {
    let verdict = serde_json::to_value(&r.verdict).unwrap_or_default();
    let mut line = format!("{:<16} {}", r.checker, verdict["verdict"].as_str().unwrap_or("?"));
    if let Some(cutoff) = r.params.get("cutoff") {
        line.push_str(&format!(" cutoff={cutoff}"));
    }
    if let Some(s) = &r.stats {
        line.push_str(&format!(
            " checks={} holds={} bad_event={} vacuous={} violated={}",
            s.checks, s.holds, s.bad_event, s.vacuous, s.violated
        ));
    }
    if let Some(v) = &r.value {
        line.push_str(&format!(" {v}"));
    }
    if !r.verdict.is_holds() {
        line.push_str(&format!("\n    {}", serde_json::to_string(&r.verdict).unwrap_or_default()));
    }
    line
}

fn cmd_check(config: &Path, args: &CheckArgs, out: Option<&Path>) -> CmdResult {
    let mut cfg = load(config)?;
    let kinds = apply_check_args(&mut cfg, args)?;
    let trace = simulate(&cfg)?;
    let records = run_checks(&trace, &kinds, &cfg.checks);
    for r in &records {
        println!("{}", describe(r));
    }
    if let Some(dir) = out {
        write_trace(dir, &trace, false)?;
        let report = RunReport {
            config: &cfg,
            seed_override: std::env::var(SEED_ENV).ok(),
            summary: trace.summary(),
            checks: Some(&records),
        };
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(if records.iter().any(|r| r.verdict.is_violated()) { ExitCode::from(EXIT_VIOLATED) } else { ExitCode::SUCCESS })
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure(format!("cannot parse seeds {s:?}; use A:B or a,b,c"));
    if let Some((a, b)) = s.split_once(':') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn cmd_batch(config: &Path, seeds: &str, args: &CheckArgs, out: &Path, parallel: bool) -> CmdResult {
    let mut cfg = ScenarioConfig::from_path(config)?;
    let kinds = apply_check_args(&mut cfg, args)?;
    let masters = parse_seeds(seeds)?;
    let report = run_batch(&cfg, &masters, &kinds, parallel)?;
    fs::create_dir_all(out)?;
    for r in &report.reports {
        write_json(&out.join(format!("seed-{}.json", r.master_seed)), r)?;
    }
    write_json(&out.join("aggregate.json"), &report.aggregate)?;
    println!("{} seeds", report.reports.len());
    for (name, t) in &report.aggregate {
        println!("{name:<16} holds={} precondition_failed={} violated={}", t.holds, t.precondition_failed, t.violated);
    }
    Ok(if report.any_violated() { ExitCode::from(EXIT_VIOLATED) } else { ExitCode::SUCCESS })
}

fn cmd_conformance(kind: TreeKind, against: Option<TreeKind>, n: usize, seed: u64, seeds: u64) -> CmdResult {
    let mut failed = false;
    for s in seed..seed + seeds.max(1) {
        let r = match against {
            Some(other) => differential_check(kind, other, s, n),
            None => conformance_check(kind, s, n),
        };
        match &r.counterexample {
            None => println!(
                "{} seed {s}: pass ({} extensions, {} queries, {} brute-force)",
                r.implementation, r.extensions, r.queries, r.brute_force_queries
            ),
            Some(c) => {
                failed = true;
                println!("{} seed {s}: FAIL {:?}: {}", r.implementation, c.axiom, c.detail);
                println!("{}", serde_json::to_string(&c.stream)?);
            }
        }
    }
    Ok(if failed { ExitCode::from(EXIT_VIOLATED) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct BoundsRow {
    k: u64,
    cp_bound: Option<f64>,
    cq_bound: Option<f64>,
}

#[derive(Serialize)]
struct BoundsTable {
    q: BTreeMap<PartyId, f64>,
    corrupt: Vec<u32>,
    delta: f64,
    delta_prime: f64,
    sl_now: u64,
    probs: SlotProbs,
    cp_epsilon: EpsilonCheck,
    cq_epsilon: EpsilonCheck,
    growth_min: u64,
    growth_failure: f64,
    rows: Vec<BoundsRow>,
    warnings: Vec<String>,
}

fn parse_q(items: &[String]) -> Result<BTreeMap<PartyId, f64>, Failure> {
    items
        .iter()
        .map(|it| {
            let (id, q) = it.split_once('=').ok_or_else(|| Failure(format!("expected id=q, got {it:?}")))?;
            Ok((PartyId(id.trim().parse()?), q.trim().parse()?))
        })
        .collect()
}

fn cmd_bounds(args: &BoundsArgs) -> CmdResult {
    let q = parse_q(&args.q)?;
    let honesty = HonestyMap::new(q.keys().map(|&p| (p, !args.corrupt.contains(&p.0))));
    let probs = slot_probs(&q, &honesty)?;
    let (lo, hi) =
        args.k_range.split_once(':').ok_or_else(|| Failure(format!("k-range must be A:B, got {:?}", args.k_range)))?;
    let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
    let sl_now = args.sl_now.unwrap_or(hi);
    let cp_epsilon = cp_epsilon_condition(&probs, args.delta, args.delta_prime)?;
    let cq_epsilon = cq_epsilon_condition(&probs, args.delta, args.delta_prime)?;
    let growth = cg_growth_bound(sl_now, args.delta, probs.p_ls)?;
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut keep = |r: Result<f64, BoundsError>, what: &str| match r {
        Ok(v) => Some(v),
        Err(e) => {
            let msg = format!("{what}: {e}");
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
            None
        }
    };
    let mut k = lo;
    while k <= hi {
        rows.push(BoundsRow {
            k,
            cp_bound: keep(cp_failure_bound(k, sl_now, &probs, args.delta, args.delta_prime), "common prefix"),
            cq_bound: keep(cq_failure_bound(k, sl_now, &probs, args.delta, args.delta_prime), "chain quality"),
        });
        k += args.k_step.max(1);
    }
    let table = BoundsTable {
        q,
        corrupt: args.corrupt.clone(),
        delta: args.delta,
        delta_prime: args.delta_prime,
        sl_now,
        probs,
        cp_epsilon,
        cq_epsilon,
        growth_min: growth.min_growth,
        growth_failure: growth.failure_prob,
        rows,
        warnings,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
        return Ok(ExitCode::SUCCESS);
    }
    println!("delta = {}, delta' = {}, sl_now = {}", table.delta, table.delta_prime, table.sl_now);
    println!("p_LS = {:.6}  p_SS = {:.6}  p_AS = {:.6}", probs.p_ls, probs.p_ss, probs.p_as);
    for (name, e) in [("common prefix", &table.cp_epsilon), ("chain quality", &table.cq_epsilon)] {
        println!(
            "{name}: epsilon {:.6} vs required {:.6} -> {}",
            e.actual,
            e.required,
            if e.satisfied { "satisfied" } else { "NOT satisfied" }
        );
    }
    println!(
        "chain growth over {} slots: >= {} lucky slots except with probability {:.6}",
        sl_now, table.growth_min, table.growth_failure
    );
    println!("{:>8}  {:>14}  {:>14}", "k", "cp failure", "cq failure");
    let cell = |v: Option<f64>| v.map_or_else(|| "vacuous".to_string(), |x| format!("{x:.6e}"));
    for r in &table.rows {
        println!("{:>8}  {:>14}  {:>14}", r.k, cell(r.cp_bound), cell(r.cq_bound));
    }
    for w in &table.warnings {
        println!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}
