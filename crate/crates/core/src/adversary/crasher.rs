use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adversary, AdversaryError, AdversaryReport};
use crate::ids::ProcessorId;
use crate::sim::coins::splitmix;
use crate::sim::{EventChoice, World};

/// Crashes to inject: `(event index, processor)`, sorted by index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSchedule(pub Vec<(u64, ProcessorId)>);

impl CrashSchedule {
    pub fn new(mut entries: Vec<(u64, ProcessorId)>) -> Self {
        entries.sort();
        CrashSchedule(entries)
    }

    /// `count` distinct processors out of `n`, each at a uniform time in
    /// `0..horizon`.
    pub fn random(seed: u64, n: usize, count: usize, horizon: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0x0c4a_54e5));
        let victims = sample(&mut rng, n, count.min(n));
        let entries = victims
            .into_iter()
            .map(|p| (rng.random_range(0..horizon.max(1)), ProcessorId::from(p)))
            .collect();
        CrashSchedule::new(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Injects scheduled crashes, delegating every other choice to `base`. A
/// crash fires at the first opportunity at or after its index; entries
/// naming an already crashed processor are skipped.
pub struct Crasher<A> {
    schedule: CrashSchedule,
    pos: usize,
    base: A,
    done: Vec<(u64, u32)>,
}

impl<A: Adversary> Crasher<A> {
    pub fn new(schedule: CrashSchedule, t: usize, base: A) -> Result<Self, AdversaryError> {
        if schedule.len() > t {
            return Err(AdversaryError::OverBudget {
                len: schedule.len(),
                t,
            });
        }
        Ok(Crasher {
            schedule,
            pos: 0,
            base,
            done: Vec::new(),
        })
    }
}

impl<A: Adversary> Adversary for Crasher<A> {
    fn name(&self) -> String {
        format!("crasher({})", self.base.name())
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        while let Some(&(at, p)) = self.schedule.0.get(self.pos) {
            if at > world.event() {
                break;
            }
            self.pos += 1;
            let c = EventChoice::Crash(p);
            if world.is_enabled(c) {
                return Some(c);
            }
        }
        self.base.choose(world)
    }

    fn observe(&mut self, world: &World, choice: EventChoice) {
        if let EventChoice::Crash(p) = choice {
            self.done.push((world.event() - 1, p.0));
        }
        self.base.observe(world, choice);
    }

    fn report(&self) -> AdversaryReport {
        AdversaryReport {
            name: self.name(),
            crashes: self.done.clone(),
            ..self.base.report()
        }
    }
}
