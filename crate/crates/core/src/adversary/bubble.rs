use fixedbitset::FixedBitSet;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Adversary, AdversaryReport, BubbleRelease, Split};
use crate::ids::ProcessorId;
use crate::sim::coins::splitmix;
use crate::sim::{Envelope, EventChoice, World};

/// Suspends every envelope to or from a bubbled processor until at least
/// `threshold` of them are in flight, then releases that processor for
/// good. Everything else is scheduled by `base`.
pub struct Bubble<A> {
    bubbled: FixedBitSet,
    members: Vec<ProcessorId>,
    threshold: u64,
    /// In-flight envelopes touching each processor while it is bubbled.
    buffered: Vec<u64>,
    split: Split,
    base: A,
    releases: Vec<BubbleRelease>,
    leaks: u64,
}

impl<A: Adversary> Bubble<A> {
    pub fn new(n: usize, members: &[ProcessorId], threshold: usize, base: A) -> Self {
        let mut bubbled = FixedBitSet::with_capacity(n);
        for p in members {
            bubbled.insert(p.index());
        }
        Bubble {
            bubbled,
            members: members.to_vec(),
            threshold: threshold as u64,
            buffered: vec![0; n],
            split: Split::default(),
            base,
            releases: Vec::new(),
            leaks: 0,
        }
    }

    /// Bubbles `size` participants chosen by `seed`.
    pub fn random(seed: u64, participants: &[ProcessorId], size: usize, threshold: usize, base: A) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0xb0bb1e));
        let mut members: Vec<ProcessorId> = sample(&mut rng, participants.len(), size)
            .into_iter()
            .map(|i| participants[i])
            .collect();
        members.sort();
        let n = participants.iter().map(|p| p.index() + 1).max().unwrap_or(0);
        let n = n.max(members.iter().map(|p| p.index() + 1).max().unwrap_or(0));
        Bubble::new(n, &members, threshold, base)
    }

    pub fn members(&self) -> &[ProcessorId] {
        &self.members
    }

    fn touches(&self, e: &Envelope) -> bool {
        self.is_bubbled(e.src) || self.is_bubbled(e.dst)
    }

    fn is_bubbled(&self, p: ProcessorId) -> bool {
        self.bubbled.contains(p.index())
    }

    fn grow(&mut self, world: &World) {
        self.bubbled.grow(world.n());
        if self.buffered.len() < world.n() {
            self.buffered.resize(world.n(), 0);
        }
    }
}

impl<A: Adversary> Adversary for Bubble<A> {
    fn name(&self) -> String {
        format!("bubble({})", self.base.name())
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        self.grow(world);
        let before = self.split.next;
        let end = world.network().next_id();
        for id in before..end {
            if let Some(e) = world.envelope(id) {
                if self.touches(e) {
                    for q in [e.src, e.dst] {
                        if self.is_bubbled(q) {
                            self.buffered[q.index()] += 1;
                        }
                        if e.src == e.dst {
                            break;
                        }
                    }
                }
            }
        }
        let bubbled = self.bubbled.clone();
        self.split
            .scan(world, |e| bubbled.contains(e.src.index()) || bubbled.contains(e.dst.index()));

        let ready: Vec<usize> = self
            .bubbled
            .ones()
            .filter(|&q| self.buffered[q] >= self.threshold)
            .collect();
        if !ready.is_empty() {
            for q in ready {
                self.bubbled.set(q, false);
                self.releases.push(BubbleRelease {
                    p: q as u32,
                    at: world.event(),
                    buffered: self.buffered[q],
                });
            }
            let bubbled = self.bubbled.clone();
            self.split
                .reclassify(world, |e| bubbled.contains(e.src.index()) || bubbled.contains(e.dst.index()));
        }
        let free = self.split.first_free(world);
        super::oldest_of(world, free)
    }

    fn observe(&mut self, world: &World, choice: EventChoice) {
        if let EventChoice::Deliver(id) = choice {
            if self.split.held.remove(&id) {
                self.leaks += 1;
            }
        }
        let _ = world;
    }

    fn report(&self) -> AdversaryReport {
        AdversaryReport {
            name: self.name(),
            releases: self.releases.clone(),
            bubbled: self.bubbled.ones().map(|q| q as u32).collect(),
            leaks: self.leaks,
            ..self.base.report()
        }
    }
}
