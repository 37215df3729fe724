use super::Adversary;
use crate::sim::{EventChoice, World};

/// Oldest obligation first: processors step in the order they got work
/// (ties by id) and envelopes are delivered in send order. Never crashes.
#[derive(Clone, Copy, Debug, Default)]
pub struct Fifo;

impl Adversary for Fifo {
    fn name(&self) -> String {
        "fifo".into()
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        super::oldest_of(world, world.network().oldest().map(|e| e.id))
    }
}
