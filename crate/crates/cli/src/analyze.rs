use std::path::Path;
use std::process::ExitCode;

use clap::ValueEnum;
use poisonpill::communicate::analysis as comm;
use poisonpill::election::{analysis as elect, check_history};
use poisonpill::renaming::analysis as rename;
use poisonpill::sifting::analysis::{self as sift, Variant};
use poisonpill::sim::{audit, Trace, TraceMode};
use poisonpill::ProtocolKind;

use crate::{read_trace, Check, FAILURE, USAGE};

fn name(check: Check) -> String {
    check.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}

/// Checks that apply to a trace of this protocol and mode.
fn applicable(trace: &Trace) -> Vec<Check> {
    let protocol = trace.header.protocol;
    let mut checks = vec![Check::Quorum, Check::Views, Check::CommitOrder];
    if Variant::of(protocol) == Variant::Hetero {
        checks.push(Check::Closure);
    }
    if matches!(protocol, ProtocolKind::Elect | ProtocolKind::Rename) {
        checks.push(Check::LeaderHistory);
    }
    if protocol == ProtocolKind::Rename {
        checks.extend([Check::NameOrder, Check::Groups]);
    }
    if trace.header.mode == TraceMode::Full {
        checks.push(Check::Replay);
    }
    checks
}

fn run_check(check: Check, trace: &Trace) -> Result<String, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match check {
        Check::Closure => {
            let all = sift::instances(trace);
            for (&key, inst) in &all {
                sift::check_closure(key, inst).map_err(|e| err(&e))?;
            }
            Ok(format!("{} sifting instances", all.len()))
        }
        Check::CommitOrder => {
            let variant = Variant::of(trace.header.protocol);
            let all = sift::instances(trace);
            for (&key, inst) in &all {
                sift::check_survivor(key, inst).map_err(|e| err(&e))?;
                sift::check_high_priority(key, inst).map_err(|e| err(&e))?;
                sift::check_commit_order(key, inst, variant).map_err(|e| err(&e))?;
            }
            Ok(format!("{} sifting instances", all.len()))
        }
        Check::LeaderHistory => {
            let all = elect::instances(trace);
            for (&key, inst) in &all {
                check_history(&inst.operations()).map_err(|e| format!("{key:?}: {e}"))?;
                elect::check_instance(key, inst).map_err(|e| err(&e))?;
            }
            Ok(format!("{} election instances", all.len()))
        }
        Check::NameOrder => {
            let names = rename::check_names(trace).map_err(|e| err(&e))?;
            rename::check_no_repeat(trace).map_err(|e| err(&e))?;
            let order = rename::name_order(trace);
            rename::check_temporal_order(trace, &order).map_err(|e| err(&e))?;
            Ok(format!("{} names", names.len()))
        }
        Check::Groups => {
            let summary = rename::check_trace(trace).map_err(|e| err(&e))?;
            Ok(format!(
                "{} iterations, group contention {:?}",
                summary.iterations, summary.group_counts
            ))
        }
        Check::Quorum => comm::check_quorum_intersection(trace)
            .map(|c| format!("{c} calls"))
            .map_err(|e| err(&e)),
        Check::Views => comm::check_view_monotonicity(trace)
            .map(|c| format!("{c} views"))
            .map_err(|e| err(&e)),
        Check::Replay => {
            audit::tally(trace).map_err(|e| err(&e))?;
            audit::check_replay(trace)
                .map(|_| format!("{} events, digest {:016x}", trace.length, trace.digest))
                .map_err(|e| err(&e))
        }
    }
}

pub fn cmd_analyze(path: &Path, checks: &[Check]) -> anyhow::Result<ExitCode> {
    let trace = match read_trace(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e:#}", path.display());
            return Ok(ExitCode::from(USAGE));
        }
    };
    let checks = if checks.is_empty() {
        applicable(&trace)
    } else {
        checks.to_vec()
    };
    println!(
        "{} n={} seed={} mode={:?} events={}",
        trace.header.protocol, trace.header.n, trace.header.seed, trace.header.mode, trace.length
    );
    let mut failed = false;
    for check in checks {
        match run_check(check, &trace) {
            Ok(detail) => println!("PASS {}: {detail}", name(check)),
            Err(witness) => {
                failed = true;
                println!("FAIL {}: {witness}", name(check));
            }
        }
    }
    Ok(if failed { ExitCode::from(FAILURE) } else { ExitCode::SUCCESS })
}
