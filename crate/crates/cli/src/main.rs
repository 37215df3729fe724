use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poisonpill::adversary::AdversaryKind;
use poisonpill::experiment::{explore, run_trials, Aggregate, ExperimentConfig, ExperimentError, ExploreConfig};
use poisonpill::sim::{Trace, TraceMode, World};
use poisonpill::ProtocolKind;
use serde::Serialize;

mod analyze;
mod settings;

/// Exit codes.
const FAILURE: u8 = 1;
const USAGE: u8 = 2;
const INCOMPLETE: u8 = 3;

#[derive(Parser)]
#[command(name = "poisonpill", version, about = "Adversarial simulator for poison-pill sifting, leader election and renaming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and write aggregate statistics
    Run(RunArgs),
    /// Enumerate every schedule and coin outcome of a small world
    Explore(ExploreArgs),
    /// Check an exported trace
    Analyze(AnalyzeArgs),
    /// Run one world and export its trace as JSON lines
    Trace(TraceArgs),
}

/// Every field mirrors a key of the flat config file; flags win.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigFlags {
    /// Flat TOML file with the same keys as these flags (underscored)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<ProtocolKind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Participants (defaults to n)
    #[arg(long)]
    pub k: Option<usize>,
    /// Crash budget (defaults to ceil(n/2)-1)
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub adversary: Option<AdversaryKind>,
    /// Strategy wrapped by crasher and bubble
    #[arg(long)]
    pub base: Option<AdversaryKind>,
    /// Crasher: processors to crash
    #[arg(long)]
    pub crashes: Option<usize>,
    /// Crasher: crash times are drawn below this event index
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Bubble: processors bubbled
    #[arg(long)]
    pub bubble_size: Option<usize>,
    /// Bubble: envelopes buffered before release
    #[arg(long)]
    pub threshold: Option<usize>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fairness_bound: Option<u64>,
    #[arg(long)]
    pub max_events: Option<u64>,
    /// Leading trials re-run to check determinism
    #[arg(long)]
    pub replays: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV output (stdout when neither --csv nor --summary is given)
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary output
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Directory for traces of failing trials (default: current directory)
    #[arg(long)]
    pub failure_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    protocol: ProtocolKind,
    /// Moves per branch (defaults depend on n and protocol)
    #[arg(long)]
    depth: Option<u32>,
    /// Crash budget
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Explore every first move, not just processor 0's
    #[arg(long)]
    no_symmetry: bool,
    #[arg(long)]
    max_states: Option<u64>,
    /// Write the report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Closure,
    CommitOrder,
    LeaderHistory,
    NameOrder,
    Groups,
    Quorum,
    Views,
    Replay,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace in JSON-lines form
    trace: PathBuf,
    /// Checks to run (default: all that apply to the trace's protocol)
    #[arg(long, value_delimiter = ',')]
    check: Vec<Check>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Trace detail
    #[arg(long, value_enum, default_value = "full")]
    mode: Mode,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Full,
    Milestones,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Analyze(a) => analyze::cmd_analyze(&a.trace, &a.check),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config_digest: &'a str,
    master_seed: u64,
    trials: u64,
    config: &'a ExperimentConfig,
    metrics: std::collections::BTreeMap<String, poisonpill::experiment::Summary>,
    seeds: Vec<u64>,
}

fn write_csv<W: Write>(w: W, cfg: &ExperimentConfig, agg: &Aggregate) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "metric", "n", "k", "adversary", "mean", "stderr", "max", "trials", "seed", "config_digest",
    ])?;
    for (metric, s) in agg.summaries() {
        out.write_record([
            metric,
            cfg.n.to_string(),
            cfg.k().to_string(),
            cfg.adversary.to_string(),
            format!("{:.6}", s.mean),
            format!("{:.6}", s.stderr),
            s.max.to_string(),
            s.count.to_string(),
            cfg.seed.to_string(),
            agg.config_digest.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match settings::resolve(&args.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(USAGE));
        }
    };
    if cfg.failure_dir.is_none() {
        cfg.failure_dir = Some(PathBuf::from("."));
    }
    let digest = cfg.digest();
    let agg = match run_trials(&cfg) {
        Ok(a) => a,
        Err(ExperimentError::Config(e)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(USAGE));
        }
        Err(ExperimentError::Trial {
            index,
            seed,
            reason,
            trace,
        }) => {
            eprintln!("FAIL config {digest} trial {index} seed {seed}: {reason}");
            if let Some(p) = trace {
                eprintln!("trace written to {}", p.display());
            }
            return Ok(ExitCode::from(FAILURE));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &cfg.csv {
        write_csv(create(path)?, &cfg, &agg)?;
    }
    if let Some(path) = &cfg.summary {
        let summary = RunSummary {
            config_digest: &digest,
            master_seed: cfg.seed,
            trials: agg.trials(),
            config: &cfg,
            metrics: agg.summaries(),
            seeds: agg.seeds.values().copied().collect(),
        };
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
    }
    if cfg.csv.is_none() && cfg.summary.is_none() {
        write_csv(io::stdout().lock(), &cfg, &agg)?;
    }
    eprintln!("ok: {} trials, config {digest}, seed {}", agg.trials(), cfg.seed);
    Ok(ExitCode::SUCCESS)
}

fn cmd_explore(args: ExploreArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ExploreConfig::new(args.n, args.protocol);
    cfg.t = args.t;
    cfg.symmetry = !args.no_symmetry;
    if let Some(d) = args.depth {
        cfg.depth = d;
    }
    if args.max_states.is_some() {
        cfg.max_states = args.max_states;
    }
    let report = match explore(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(USAGE));
        }
    };
    println!("{} n={} t={} depth={}", cfg.protocol, cfg.n, cfg.t, cfg.depth);
    println!(
        "states={} terminals={} incomplete={} deepest={}",
        report.states,
        report.terminals(),
        report.incomplete,
        report.deepest
    );
    for (outcome, count) in &report.outcomes {
        println!("{count:>10}  {outcome}");
    }
    if let Some(path) = &args.json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "config": cfg, "report": report }))?;
        writeln!(w)?;
    }
    if let Some(w) = &report.violation {
        println!("VIOLATION: {}", w.reason);
        for step in &w.path {
            println!("  {:?} coins={:?}", step.choice, step.coins);
        }
        return Ok(ExitCode::from(FAILURE));
    }
    let verdict = match cfg.protocol {
        ProtocolKind::Elect => "1 WIN",
        ProtocolKind::Rename => "distinct names",
        _ => ">= 1 SURVIVE",
    };
    if report.complete() {
        println!("all branches: {verdict}");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("all complete branches: {verdict}; {} states cut at the cap", report.incomplete);
        Ok(ExitCode::from(INCOMPLETE))
    }
}

fn cmd_trace(args: TraceArgs) -> anyhow::Result<ExitCode> {
    let cfg = match settings::resolve(&args.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(USAGE));
        }
    };
    let mode = match args.mode {
        Mode::Full => TraceMode::Full,
        Mode::Milestones => TraceMode::Milestones,
    };
    let seed = cfg.seed;
    let mut world = World::new(cfg.world_config(seed, mode))?;
    let mut adversary = cfg.build_adversary(seed)?;
    let outcome = poisonpill::sim::run(&mut world, &mut adversary, cfg.limits());
    let mut trace: Trace = match outcome {
        Ok(_) => world.trace(),
        Err(poisonpill::sim::SimError::LivenessTimeout { trace, .. }) => *trace,
        Err(e) => {
            eprintln!("run failed: {e}");
            world.take_trace()
        }
    };
    trace.header.note = Some(format!("{} config {}", adversary.name(), cfg.digest()));
    trace.write_jsonl(create(&args.out)?)?;
    for (p, o) in world.outcomes() {
        println!("p{} {o}", p.0);
    }
    eprintln!("{} events, digest {:016x}", trace.length, trace.digest);
    Ok(ExitCode::SUCCESS)
}

pub fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    let file = File::open(path)?;
    Ok(Trace::read_jsonl(BufReader::new(file))?)
}
