use poisonpill::experiment::{explore, ExploreConfig};
use poisonpill::ProtocolKind;

#[test]
fn one_processor_has_a_single_outcome() {
    for protocol in ProtocolKind::ALL {
        let r = explore(&ExploreConfig::new(1, protocol)).unwrap();
        assert!(r.complete() && r.violation.is_none(), "{protocol}: {r:?}");
        assert_eq!(r.outcomes.len(), 1, "{protocol}: {:?}", r.outcomes);
        let outcome = r.outcomes.keys().next().unwrap();
        let expected = match protocol {
            ProtocolKind::Elect => "win",
            ProtocolKind::Rename => "1",
            _ => "survive",
        };
        assert!(outcome.contains(expected), "{protocol}: {outcome}");
    }
}

#[test]
fn two_processor_sifting_completes_with_a_survivor() {
    for protocol in [ProtocolKind::SiftBasic, ProtocolKind::SiftHetero, ProtocolKind::SiftNaive] {
        let r = explore(&ExploreConfig::new(2, protocol)).unwrap();
        assert!(r.complete(), "{protocol}: {} cut", r.incomplete);
        assert!(r.violation.is_none(), "{protocol}: {:?}", r.violation);
        assert!(r.outcomes.keys().all(|o| o.contains("survive")), "{protocol}: {:?}", r.outcomes);
    }
}

#[test]
fn two_processor_election_never_elects_twice() {
    let mut cfg = ExploreConfig::new(2, ProtocolKind::Elect);
    cfg.depth = 40;
    let r = explore(&cfg).unwrap();
    assert!(r.violation.is_none(), "{:?}", r.violation);
    assert!(r.terminals() > 0);
    for outcome in r.outcomes.keys() {
        assert_eq!(outcome.matches("win").count(), 1, "{outcome}");
    }
}

#[test]
fn symmetry_reduction_keeps_outcomes() {
    let mut cfg = ExploreConfig::new(2, ProtocolKind::SiftHetero);
    let reduced = explore(&cfg).unwrap();
    cfg.symmetry = false;
    let full = explore(&cfg).unwrap();
    assert!(full.states >= reduced.states);
    assert_eq!(
        full.outcomes.keys().collect::<Vec<_>>(),
        reduced.outcomes.keys().collect::<Vec<_>>()
    );
}

#[test]
fn caps_are_reported() {
    let mut cfg = ExploreConfig::new(2, ProtocolKind::SiftHetero);
    cfg.depth = 5;
    assert!(!explore(&cfg).unwrap().complete());
    cfg.depth = 64;
    cfg.max_states = Some(100);
    assert!(!explore(&cfg).unwrap().complete());
    assert!(explore(&ExploreConfig::new(4, ProtocolKind::Elect)).is_err());
}
