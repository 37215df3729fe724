//! Exhaustive exploration of small worlds: every schedule and every coin
//! outcome up to a depth cap.
//!
//! States are deduplicated by [`World::fingerprint`], so outcome counts are
//! over distinct terminal states rather than over paths.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ids::ProcessorId;
use crate::protocol::{Outcome, ProtocolKind};
use crate::sifting::SiftVerdict;
use crate::sim::coins::{Coins, Script};
use crate::sim::world::content_hash;
use crate::sim::{ConfigError, EventChoice, SimError, TraceMode, World, WorldConfig};

use crate::election::ElectVerdict;

/// Largest world the explorer accepts.
pub const MAX_N: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub n: usize,
    pub protocol: ProtocolKind,
    #[serde(default)]
    pub t: usize,
    /// Moves along one branch before it is cut and counted incomplete. A
    /// move is a crash, or a step together with the deliveries it
    /// consumes.
    pub depth: u32,
    /// Only the first move of processor 0 is explored from the initial
    /// state; the others are the same up to renumbering.
    #[serde(default = "yes")]
    pub symmetry: bool,
    /// Distinct states visited before giving up.
    #[serde(default)]
    pub max_states: Option<u64>,
}

fn yes() -> bool {
    true
}

impl ExploreConfig {
    pub fn new(n: usize, protocol: ProtocolKind) -> Self {
        ExploreConfig {
            n,
            protocol,
            t: 0,
            depth: default_depth(n, protocol),
            symmetry: true,
            max_states: Some(DEFAULT_MAX_STATES),
        }
    }
}

/// Every n ≤ 2 sifting branch finishes within 32 moves. Election and
/// renaming retry with probability that only tends to zero, so no cap
/// completes them; 60 moves reaches terminals of both. At n = 3 the state
/// count grows about sixfold per move and 7 is what fits in memory.
pub fn default_depth(n: usize, protocol: ProtocolKind) -> u32 {
    match (n, protocol) {
        (0 | 1, _) => 64,
        (2, ProtocolKind::Elect | ProtocolKind::Rename) => 60,
        (2, _) => 32,
        _ => 7,
    }
}

/// Default state limit; a breadth-first layer of n = 3 worlds costs a few
/// kilobytes per state.
pub const DEFAULT_MAX_STATES: u64 = 500_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub choice: EventChoice,
    /// Coin outcomes drawn during this event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coins: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub reason: String,
    pub path: Vec<PathStep>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    /// Distinct states reached.
    pub states: u64,
    /// Distinct terminal states, keyed by their outcome vector.
    pub outcomes: BTreeMap<String, u64>,
    /// Undecided states left unexpanded at the depth cap or the state
    /// limit.
    pub incomplete: u64,
    pub deepest: u32,
    pub violation: Option<Witness>,
}

impl ExploreReport {
    pub fn complete(&self) -> bool {
        self.incomplete == 0
    }

    pub fn terminals(&self) -> u64 {
        self.outcomes.values().sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error("exploration supports n ≤ {MAX_N}, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

struct Explorer {
    cfg: ExploreConfig,
    seen: HashSet<u128>,
    /// Parent and incoming move of every state kept for expansion, for
    /// rebuilding witness paths.
    nodes: Vec<(u32, Vec<PathStep>)>,
    report: ExploreReport,
}

pub fn explore(cfg: &ExploreConfig) -> Result<ExploreReport, ExploreError> {
    if cfg.n > MAX_N {
        return Err(ExploreError::TooLarge(cfg.n));
    }
    let wc = WorldConfig::new(cfg.n, cfg.n, cfg.t, cfg.protocol, 0).with_trace(TraceMode::Off);
    let mut world = World::new(wc)?;
    world.set_coins(Coins::Scripted(Script::default()));
    let mut ex = Explorer {
        cfg: cfg.clone(),
        seen: HashSet::new(),
        nodes: Vec::new(),
        report: ExploreReport::default(),
    };
    ex.run(world);
    Ok(ex.report)
}

/// Labels a state by each processor's result, e.g. `p0=win p1=lose`.
fn label(world: &World) -> String {
    (0..world.n())
        .map(|p| {
            let id = ProcessorId::from(p);
            match world.outcome(id) {
                Some(o) => format!("p{p}={o}"),
                None if world.is_crashed(id) => format!("p{p}=crashed"),
                None => format!("p{p}=pending"),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Safety properties checked at every visited state.
fn check_state(world: &World, protocol: ProtocolKind) -> Result<(), String> {
    world.history().check().map_err(|e| e.to_string())?;
    let outcomes = world.outcomes();
    let done = world.all_done() && world.crashed_count() == 0;
    match protocol {
        ProtocolKind::Elect => {
            let wins = outcomes
                .iter()
                .filter(|(_, o)| matches!(o, Outcome::Elect(e) if e.verdict == ElectVerdict::Win))
                .count();
            if wins > 1 {
                return Err(format!("{wins} winners"));
            }
            if done && wins != 1 {
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
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(format!("duplicate names {names:?}"));
            }
            if names.iter().any(|&u| u == 0 || u as usize > world.n()) {
                return Err(format!("name out of range {names:?}"));
            }
        }
        _ => {
            let survivors = outcomes
                .iter()
                .filter(|(_, o)| matches!(o, Outcome::Sift(s) if s.verdict == SiftVerdict::Survive))
                .count();
            if done && survivors == 0 {
                return Err("every participant returned and none survived".into());
            }
        }
    }
    Ok(())
}

impl Explorer {
    fn witness(&self, mut node: u32, last: Vec<PathStep>, reason: String) -> Witness {
        let mut parts = vec![last];
        while node != u32::MAX {
            let (parent, steps) = &self.nodes[node as usize];
            parts.push(steps.clone());
            node = *parent;
        }
        Witness {
            reason,
            path: parts.into_iter().rev().flatten().collect(),
        }
    }

    /// Moves from `world`: a crash, or a step of `p` preceded by the
    /// delivery of some sub-multiset of the envelopes in flight to `p`.
    /// A delivery only matters at its recipient's next step, so every
    /// schedule is equivalent to one made of these moves. Late ACKs are
    /// never delivered.
    fn moves(&self, world: &World, root: bool) -> Vec<Vec<EventChoice>> {
        let mut out = Vec::new();
        for p in (0..world.n()).map(ProcessorId::from) {
            if world.is_crashed(p) || (root && self.cfg.symmetry && p.0 != 0) {
                continue;
            }
            let mut groups: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
            for e in world.network().iter().filter(|e| e.dst == p && !world.is_late(e)) {
                groups.entry(content_hash(e)).or_default().push(e.id);
            }
            let groups: Vec<Vec<u64>> = groups.into_values().collect();
            let mut take = vec![0usize; groups.len()];
            loop {
                let delivered: Vec<EventChoice> = groups
                    .iter()
                    .zip(&take)
                    .flat_map(|(g, &k)| g[..k].iter().map(|&id| EventChoice::Deliver(id)))
                    .collect();
                if !delivered.is_empty() || world.has_work(p) {
                    let mut m = delivered;
                    m.push(EventChoice::Step(p));
                    out.push(m);
                }
                // Next combination, odometer style.
                let Some(i) = (0..groups.len()).find(|&i| take[i] < groups[i].len()) else {
                    break;
                };
                take[i] += 1;
                take[..i].fill(0);
            }
            if world.crash_budget_left() > 0 {
                out.push(vec![EventChoice::Crash(p)]);
            }
        }
        out
    }

    /// Breadth first, so every state is expanded once, at the shallowest
    /// depth it occurs.
    fn run(&mut self, root: World) {
        let steps = |m: &[EventChoice], coins: Vec<u32>| -> Vec<PathStep> {
            let (last, deliveries) = m.split_last().expect("a move is never empty");
            let mut v: Vec<PathStep> = deliveries.iter().map(|&choice| PathStep { choice, coins: vec![] }).collect();
            v.push(PathStep { choice: *last, coins });
            v
        };
        self.seen.insert(root.fingerprint());
        self.report.states = 1;
        if let Err(reason) = check_state(&root, self.cfg.protocol) {
            self.report.violation = Some(Witness { reason, path: vec![] });
            return;
        }
        if root.all_done() {
            *self.report.outcomes.entry(label(&root)).or_default() += 1;
            return;
        }
        let mut layer = vec![(root, u32::MAX)];
        let mut depth = 0;
        while !layer.is_empty() {
            if depth >= self.cfg.depth {
                self.report.incomplete += layer.len() as u64;
                return;
            }
            self.report.deepest = depth;
            let mut next = Vec::new();
            for (i, (world, node)) in layer.iter().enumerate() {
                if self.cfg.max_states.is_some_and(|m| self.report.states >= m) {
                    self.report.incomplete += (layer.len() - i + next.len()) as u64;
                    return;
                }
                let moves = self.moves(world, depth == 0);
                if moves.is_empty() {
                    let reason = format!("stalled with {:?} undecided", world.undecided());
                    self.report.violation = Some(self.witness(*node, vec![], reason));
                    return;
                }
                for m in moves {
                    let mut branches = Vec::new();
                    if let Err(e) = expand(world, &m, Vec::new(), &mut branches) {
                        let w = self.witness(*node, steps(&m, vec![]), e.to_string());
                        self.report.violation = Some(w);
                        return;
                    }
                    for (child, coins) in branches {
                        if !self.seen.insert(child.fingerprint()) {
                            continue;
                        }
                        self.report.states += 1;
                        if let Err(reason) = check_state(&child, self.cfg.protocol) {
                            self.report.violation = Some(self.witness(*node, steps(&m, coins), reason));
                            return;
                        }
                        if child.all_done() {
                            *self.report.outcomes.entry(label(&child)).or_default() += 1;
                            continue;
                        }
                        self.nodes.push((*node, steps(&m, coins)));
                        next.push((child, (self.nodes.len() - 1) as u32));
                    }
                }
            }
            layer = next;
            depth += 1;
        }
        self.report.deepest = depth;
    }
}

/// Applies a move under every assignment of the coins it draws, starting
/// from the scripted `prefix`.
fn expand(
    world: &World,
    events: &[EventChoice],
    prefix: Vec<u32>,
    out: &mut Vec<(World, Vec<u32>)>,
) -> Result<(), SimError> {
    let mut w = world.clone();
    w.set_coins(Coins::Scripted(Script {
        values: prefix.clone(),
        ..Script::default()
    }));
    for &e in events {
        w.apply(e)?;
    }
    let Coins::Scripted(script) = w.coins() else {
        unreachable!("explorer worlds use scripted coins")
    };
    let requested = script.requested.clone();
    let taken: Vec<u32> = requested
        .iter()
        .enumerate()
        .map(|(i, d)| prefix.get(i).copied().unwrap_or_else(|| d.outcomes()[0]))
        .collect();
    out.push((w, taken.clone()));
    for i in prefix.len()..requested.len() {
        for &v in &requested[i].outcomes()[1..] {
            let mut alt = taken[..i].to_vec();
            alt.push(v);
            expand(world, events, alt, out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_processor_has_one_outcome() {
        for (protocol, want) in [
            (ProtocolKind::Elect, "p0=win"),
            (ProtocolKind::Rename, "p0=name 1"),
            (ProtocolKind::SiftHetero, "p0=survive"),
            (ProtocolKind::SiftBasic, "p0=survive"),
        ] {
            let r = explore(&ExploreConfig::new(1, protocol)).unwrap();
            assert!(r.complete(), "{protocol}");
            assert_eq!(r.violation, None, "{protocol}");
            assert_eq!(r.outcomes.keys().collect::<Vec<_>>(), [want], "{protocol}");
        }
    }

    #[test]
    fn two_processor_sifting_completes() {
        let r = explore(&ExploreConfig::new(2, ProtocolKind::SiftHetero)).unwrap();
        assert!(r.complete());
        assert_eq!(r.violation, None);
        assert!(!r.outcomes.contains_key("p0=die p1=die"));
        assert!(r.outcomes.contains_key("p0=survive p1=survive"));
    }

    #[test]
    fn tiny_cap_is_incomplete() {
        let mut cfg = ExploreConfig::new(2, ProtocolKind::Elect);
        cfg.depth = 3;
        let r = explore(&cfg).unwrap();
        assert!(!r.complete());
        assert_eq!(r.violation, None);
    }
}
