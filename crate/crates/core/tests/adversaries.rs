use poisonpill::adversary::AdversaryKind;
use poisonpill::experiment::{run_trials, ExperimentConfig};
use poisonpill::sim::{run, Milestone, TraceMode, World};
use poisonpill::ProtocolKind;

fn config(protocol: ProtocolKind, n: usize, adversary: AdversaryKind, trials: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(protocol, n);
    cfg.adversary = adversary;
    cfg.trials = trials;
    cfg.seed = 17;
    cfg
}

#[test]
fn sequential_runs_participants_one_at_a_time() {
    let cfg = config(ProtocolKind::SiftBasic, 6, AdversaryKind::Sequential, 1);
    let mut world = World::new(cfg.world_config(3, TraceMode::Milestones)).unwrap();
    let mut adversary = cfg.build_adversary(3).unwrap();
    run(&mut world, &mut adversary, cfg.limits()).unwrap();
    let trace = world.trace();
    let mut running: Option<u32> = None;
    let mut order = Vec::new();
    for (_, m) in trace.milestones() {
        match m {
            Milestone::Invoke { p, .. } => {
                assert_eq!(running, None, "p{p} invoked while p{running:?} runs");
                running = Some(*p);
                order.push(*p);
            }
            Milestone::Respond { p, .. } => {
                assert_eq!(running, Some(*p));
                running = None;
            }
            _ => {}
        }
    }
    assert_eq!(order, (0..6).collect::<Vec<u32>>());
}

#[test]
fn crasher_uses_the_whole_budget() {
    for protocol in [ProtocolKind::Elect, ProtocolKind::Rename] {
        let agg = run_trials(&config(protocol, 9, AdversaryKind::Crasher, 20)).unwrap();
        let crashes = agg.summary("crashes").unwrap();
        assert_eq!((crashes.min, crashes.max), (4.0, 4.0));
    }
}

#[test]
fn bubble_holds_traffic_until_threshold() {
    let mut cfg = config(ProtocolKind::Elect, 16, AdversaryKind::Bubble, 10);
    cfg.bubble_size = Some(4);
    cfg.threshold = Some(4);
    let agg = run_trials(&cfg).unwrap();
    assert_eq!(agg.summary("releases").unwrap().min, 4.0);
    assert!(agg.summary("min_buffered").unwrap().min >= 4.0);
    assert!(agg.summary("messages").unwrap().min >= 16.0 * 16.0 / 16.0);
}

#[test]
fn coin_inspector_keeps_every_naive_sifter_alive() {
    let agg = run_trials(&config(ProtocolKind::SiftNaive, 8, AdversaryKind::CoinInspector, 50)).unwrap();
    assert_eq!(agg.summary("all_survive").unwrap().mean, 1.0);
    let hetero = run_trials(&config(ProtocolKind::SiftHetero, 8, AdversaryKind::CoinInspector, 50)).unwrap();
    assert!(hetero.summary("all_survive").unwrap().mean < 0.5);
}

#[test]
fn watchdog_bounds_every_deferral() {
    for adversary in AdversaryKind::ALL {
        let mut cfg = config(ProtocolKind::Rename, 6, adversary, 5);
        if adversary == AdversaryKind::Bubble {
            cfg.threshold = Some(1000);
        }
        let bound = cfg.limits().fairness_bound as f64;
        let agg = run_trials(&cfg).unwrap();
        assert!(agg.summary("max_deferral").unwrap().max <= bound, "{adversary}");
    }
}
