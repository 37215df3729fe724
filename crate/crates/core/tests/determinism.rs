use poisonpill::adversary::AdversaryKind;
use poisonpill::experiment::{check_run, run_trials, ExperimentConfig};
use poisonpill::sim::{audit, run, Trace, TraceMode, World};
use poisonpill::ProtocolKind;

fn trace_of(cfg: &ExperimentConfig, seed: u64, mode: TraceMode) -> (World, Trace) {
    let mut world = World::new(cfg.world_config(seed, mode)).unwrap();
    let mut adversary = cfg.build_adversary(seed).unwrap();
    run(&mut world, &mut adversary, cfg.limits()).unwrap();
    let trace = world.trace();
    (world, trace)
}

fn config(protocol: ProtocolKind, n: usize, adversary: AdversaryKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(protocol, n);
    cfg.adversary = adversary;
    cfg
}

#[test]
fn equal_seeds_give_identical_traces() {
    for adversary in AdversaryKind::ALL {
        let cfg = config(ProtocolKind::Elect, 6, adversary);
        let runs: Vec<Trace> = (0..3).map(|_| trace_of(&cfg, 11, TraceMode::Full).1).collect();
        assert_eq!(runs[0], runs[1], "{adversary}");
        assert_eq!(runs[1], runs[2], "{adversary}");
    }
}

#[test]
fn unequal_seeds_differ() {
    let cfg = config(ProtocolKind::Rename, 8, AdversaryKind::Random);
    let digests: std::collections::BTreeSet<u64> =
        (0..8).map(|s| trace_of(&cfg, s, TraceMode::Off).1.digest).collect();
    assert!(digests.len() >= 7, "{digests:?}");
}

#[test]
fn digest_does_not_depend_on_trace_mode() {
    let cfg = config(ProtocolKind::SiftHetero, 9, AdversaryKind::CoinInspector);
    let off = trace_of(&cfg, 3, TraceMode::Off).1;
    let milestones = trace_of(&cfg, 3, TraceMode::Milestones).1;
    let full = trace_of(&cfg, 3, TraceMode::Full).1;
    assert_eq!(off.digest, milestones.digest);
    assert_eq!(off.digest, full.digest);
    assert_eq!(full.length, full.events.len() as u64);
    assert!(milestones.events.len() < full.events.len());
}

#[test]
fn full_traces_replay_and_match_counters() {
    for protocol in ProtocolKind::ALL {
        let cfg = config(protocol, 7, AdversaryKind::Crasher);
        let (world, trace) = trace_of(&cfg, 5, TraceMode::Full);
        check_run(&world, &trace).unwrap();
        audit::check_counters(&trace, world.counters()).unwrap();
        let replayed = audit::check_replay(&trace).unwrap();
        assert_eq!(replayed.outcomes(), world.outcomes(), "{protocol}");
    }
}

#[test]
fn jsonl_round_trip() {
    let cfg = config(ProtocolKind::Rename, 5, AdversaryKind::Random);
    let (_, trace) = trace_of(&cfg, 2, TraceMode::Full);
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).unwrap();
    let back = Trace::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, trace);
    audit::check_replay(&back).unwrap();
}

#[test]
fn rerunning_a_config_reproduces_the_aggregate() {
    let mut cfg = config(ProtocolKind::Elect, 12, AdversaryKind::Random);
    cfg.trials = 6;
    cfg.seed = 99;
    cfg.replays = 2;
    let a = run_trials(&cfg).unwrap();
    let b = run_trials(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.config_digest, cfg.digest());
    cfg.seed = 100;
    assert_ne!(run_trials(&cfg).unwrap().samples, a.samples);
}
