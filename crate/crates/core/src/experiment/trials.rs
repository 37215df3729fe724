//! Independent seeded trials of one configuration, checked inline and
//! folded into an [`Aggregate`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use crate::adversary::AdversaryReport;
use crate::communicate::analysis as comm;
use crate::election::analysis as elect;
use crate::election::ElectVerdict;
use crate::ids::SiftKey;
use crate::protocol::{Outcome, ProtocolKind};
use crate::renaming::analysis as rename;
use crate::sifting::analysis as sift;
use crate::sim::trace::TraceIoError;
use crate::sim::{audit, run, RunReport, SimError, Trace, TraceMode, World};

use super::config::{ConfigIssue, ExperimentConfig};
use super::stats::{trial_seed, Aggregate};

/// Full-trace audits are skipped above this size; the traces get large.
pub const AUDIT_MAX_N: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigIssue),
    #[error("trial {index} (seed {seed}): {reason}")]
    Trial {
        index: u64,
        seed: u64,
        reason: String,
        /// The exported trace of the failing run, if one was written.
        trace: Option<PathBuf>,
    },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: TraceIoError },
}

/// One finished trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub digest: u64,
}

struct Finished {
    world: World,
    report: RunReport,
    adversary: AdversaryReport,
}

fn execute(cfg: &ExperimentConfig, seed: u64, mode: TraceMode) -> Result<Finished, (String, Option<Box<Trace>>)> {
    let wc = cfg.world_config(seed, mode);
    let mut world = World::new(wc).map_err(|e| (e.to_string(), None))?;
    let mut adversary = cfg.build_adversary(seed).map_err(|e| (e.to_string(), None))?;
    match run(&mut world, &mut adversary, cfg.limits()) {
        Ok(report) => Ok(Finished {
            world,
            report,
            adversary: adversary.report(),
        }),
        Err(SimError::LivenessTimeout { events, undecided, trace }) => Err((
            format!("no termination after {events} events; undecided: {undecided:?}"),
            Some(trace),
        )),
        Err(e) => {
            let trace = world.take_trace();
            Err((e.to_string(), Some(Box::new(trace))))
        }
    }
}

/// Outcome-level properties plus every trace analyzer that applies.
pub fn check_run(world: &World, trace: &Trace) -> Result<(), String> {
    let protocol = world.protocol();
    let outcomes = world.outcomes();
    match protocol {
        ProtocolKind::Elect => {
            world.history().check().map_err(|e| e.to_string())?;
            let wins = outcomes
                .iter()
                .filter(|(_, o)| matches!(o, Outcome::Elect(e) if e.verdict == ElectVerdict::Win))
                .count();
            if wins > 1 {
                return Err(format!("{wins} processors won"));
            }
            if wins == 0 && world.crashed_count() == 0 {
                return Err("every participant returned and nobody won".into());
            }
        }
        ProtocolKind::Rename => {
            let mut names: Vec<u32> = outcomes
                .iter()
                .filter_map(|(_, o)| match o {
                    Outcome::Name(u) => Some(*u),
                    _ => None,
                })
                .collect();
            names.sort_unstable();
            if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
                return Err(format!("name {} returned twice", w[0]));
            }
            if let Some(u) = names.iter().find(|&&u| u == 0 || u as usize > world.n()) {
                return Err(format!("name {u} is outside 1..={}", world.n()));
            }
        }
        _ => {}
    }
    comm::check_quorum_intersection(trace).map_err(|e| e.to_string())?;
    comm::check_view_monotonicity(trace).map_err(|e| e.to_string())?;
    sift::check_trace(trace).map_err(|e| e.to_string())?;
    if matches!(protocol, ProtocolKind::Elect | ProtocolKind::Rename) {
        elect::check_trace(trace).map_err(|e| e.to_string())?;
    }
    if protocol == ProtocolKind::Rename {
        rename::check_trace(trace).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn measure(cfg: &ExperimentConfig, f: &Finished, trace: &Trace) -> BTreeMap<String, f64> {
    let c = f.world.counters();
    let mut m: BTreeMap<String, f64> = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };
    put("messages", c.envelopes as f64);
    put("max_calls", f64::from(c.max_calls()));
    put("events", f.report.events as f64);
    put("forced", c.forced as f64);
    put("max_deferral", c.max_deferral as f64);
    put("crashes", f.world.crashed_count() as f64);
    match cfg.protocol {
        ProtocolKind::Elect => {
            let rounds = f
                .world
                .outcomes()
                .iter()
                .filter_map(|(_, o)| match o {
                    Outcome::Elect(e) => Some(e.round),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            put("rounds", f64::from(rounds));
        }
        ProtocolKind::Rename => {
            let iterations = rename::check_trace(trace).map(|s| s.iterations).unwrap_or(0);
            put("iterations", iterations as f64);
        }
        _ => {
            let inst = sift::instances(trace).remove(&SiftKey::SOLO).unwrap_or_default();
            put("survivors", inst.survivors() as f64);
            put("ones", inst.ones() as f64);
            put("zero_survivors", inst.zero_survivors() as f64);
            let all = inst.survivors() == cfg.k();
            put("all_survive", if all { 1.0 } else { 0.0 });
        }
    }
    if !f.adversary.releases.is_empty() {
        put("releases", f.adversary.releases.len() as f64);
        let min = f.adversary.releases.iter().map(|r| r.buffered).min().unwrap_or(0);
        put("min_buffered", min as f64);
    }
    m
}

/// Runs trial `index` with milestone tracing, checks it and measures it.
pub fn run_trial(cfg: &ExperimentConfig, index: u64) -> Result<TrialRecord, String> {
    let seed = trial_seed(cfg.seed, index);
    let f = execute(cfg, seed, TraceMode::Milestones).map_err(|(reason, _)| reason)?;
    let trace = f.world.trace();
    check_run(&f.world, &trace)?;
    Ok(TrialRecord {
        index,
        seed,
        metrics: measure(cfg, &f, &trace),
        digest: trace.digest,
    })
}

/// Re-runs a finished trial and demands the same digest and metrics. Small
/// worlds are re-run with a full trace, which is also audited against the
/// counters and replayed from its recorded choices.
fn check_determinism(cfg: &ExperimentConfig, rec: &TrialRecord) -> Result<(), String> {
    let mode = if cfg.n <= AUDIT_MAX_N {
        TraceMode::Full
    } else {
        TraceMode::Milestones
    };
    let f = execute(cfg, rec.seed, mode).map_err(|(reason, _)| format!("re-run failed: {reason}"))?;
    let trace = f.world.trace();
    if trace.digest != rec.digest {
        return Err(format!(
            "re-run digest {:016x} differs from {:016x}",
            trace.digest, rec.digest
        ));
    }
    if measure(cfg, &f, &trace) != rec.metrics {
        return Err("re-run measured different metrics".into());
    }
    if mode == TraceMode::Full {
        audit::check_counters(&trace, f.world.counters()).map_err(|e| e.to_string())?;
        audit::check_replay(&trace).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Re-runs a failing trial with a full trace and writes it out.
fn export_failure(cfg: &ExperimentConfig, seed: u64) -> Result<Option<PathBuf>, ExperimentError> {
    let Some(dir) = &cfg.failure_dir else {
        return Ok(None);
    };
    let mut trace = match execute(cfg, seed, TraceMode::Full) {
        Ok(f) => f.world.trace(),
        Err((_, Some(t))) => *t,
        Err((_, None)) => return Ok(None),
    };
    trace.header.note = Some(format!("config {}", cfg.digest()));
    let path = dir.join(format!("failure-{seed}.jsonl"));
    let io = |source: TraceIoError| ExperimentError::Io {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(e.into()))?;
    let file = File::create(&path).map_err(|e| io(e.into()))?;
    trace.write_jsonl(BufWriter::new(file)).map_err(io)?;
    Ok(Some(path))
}

fn worker(cfg: &ExperimentConfig, indices: impl Iterator<Item = u64>) -> Result<Aggregate, (u64, String)> {
    let mut agg = Aggregate::new(cfg.digest(), cfg.seed);
    for i in indices {
        let rec = run_trial(cfg, i).map_err(|r| (i, r))?;
        if i < cfg.replays {
            check_determinism(cfg, &rec).map_err(|r| (i, format!("not reproducible: {r}")))?;
        }
        agg.record(rec.index, rec.seed, &rec.metrics);
    }
    Ok(agg)
}

/// Runs `cfg.trials` trials, spread over `cfg.threads` threads (all
/// available cores by default). The first failing trial, by index, aborts
/// the run; its trace is exported when `failure_dir` is set.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Aggregate, ExperimentError> {
    cfg.validate()?;
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, cfg.trials.max(1) as usize) as u64;
    let results: Vec<Result<Aggregate, (u64, String)>> = if threads == 1 {
        vec![worker(cfg, 0..cfg.trials)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| s.spawn(move || worker(cfg, (w..cfg.trials).step_by(threads as usize))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trial worker panicked"))
                .collect()
        })
    };
    let mut total = Aggregate::new(cfg.digest(), cfg.seed);
    let mut failure: Option<(u64, String)> = None;
    for r in results {
        match r {
            Ok(a) => total = total.merge(a),
            Err((i, reason)) => {
                if failure.as_ref().is_none_or(|(j, _)| i < *j) {
                    failure = Some((i, reason));
                }
            }
        }
    }
    if let Some((index, reason)) = failure {
        let seed = trial_seed(cfg.seed, index);
        let trace = export_failure(cfg, seed)?;
        return Err(ExperimentError::Trial {
            index,
            seed,
            reason,
            trace,
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AdversaryKind;

    #[test]
    fn single_participant_election_wins() {
        let mut cfg = ExperimentConfig::new(ProtocolKind::Elect, 1);
        cfg.trials = 1;
        let agg = run_trials(&cfg).unwrap();
        assert_eq!(agg.trials(), 1);
        assert_eq!(agg.summary("rounds").unwrap().max, 2.0);
        assert_eq!(agg.summary("crashes").unwrap().max, 0.0);
    }

    #[test]
    fn sifting_metrics_are_recorded() {
        let mut cfg = ExperimentConfig::new(ProtocolKind::SiftHetero, 16);
        cfg.adversary = AdversaryKind::Random;
        cfg.trials = 8;
        cfg.seed = 5;
        let agg = run_trials(&cfg).unwrap();
        assert_eq!(agg.trials(), 8);
        for m in ["survivors", "ones", "zero_survivors", "all_survive", "messages"] {
            assert_eq!(agg.samples[m].len(), 8, "{m}");
        }
        assert!(agg.summary("survivors").unwrap().min >= 1.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::new(ProtocolKind::Rename, 8);
        cfg.adversary = AdversaryKind::Random;
        cfg.trials = 6;
        cfg.threads = Some(1);
        let a = run_trials(&cfg).unwrap();
        cfg.threads = Some(3);
        let b = run_trials(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn liveness_failures_are_exported() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ProtocolKind::Elect, 4);
        cfg.max_events = Some(10);
        cfg.failure_dir = Some(dir.path().to_path_buf());
        let Err(ExperimentError::Trial { index, trace, .. }) = run_trials(&cfg) else {
            panic!("ten events cannot finish an election");
        };
        assert_eq!(index, 0);
        let path = trace.expect("trace exported");
        let t = Trace::read_jsonl(std::io::BufReader::new(File::open(path).unwrap())).unwrap();
        assert_eq!(t.header.mode, TraceMode::Full);
        assert_eq!(t.length, 10);
    }
}
