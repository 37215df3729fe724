use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Adversary;
use crate::ids::ProcessorId;
use crate::sim::coins::splitmix;
use crate::sim::{EventChoice, World};

/// Uniform choice among in-flight envelopes and processors with work.
/// Steps of idle processors are no-ops and are not offered. Never crashes.
#[derive(Clone, Debug)]
pub struct RandomOrder {
    rng: ChaCha8Rng,
}

impl RandomOrder {
    pub fn new(seed: u64) -> Self {
        RandomOrder {
            rng: ChaCha8Rng::seed_from_u64(splitmix(seed, 0x5eed_ad7e)),
        }
    }
}

impl Adversary for RandomOrder {
    fn name(&self) -> String {
        "random".into()
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        let envs = world.network().len();
        let total = envs + world.ready().len();
        if total == 0 {
            return None;
        }
        let i = self.rng.random_range(0..total);
        Some(if i < envs {
            EventChoice::Deliver(world.network().live_at(i).expect("index below len"))
        } else {
            EventChoice::Step(ProcessorId(world.ready().at(i - envs).expect("index below len")))
        })
    }
}
