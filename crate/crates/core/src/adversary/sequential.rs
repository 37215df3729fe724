use super::Adversary;
use crate::ids::ProcessorId;
use crate::sim::{EventChoice, Role, World};

/// Runs participants one at a time, in id order: each is invoked only once
/// the previous one has returned and its envelopes have drained. Every
/// delivery is followed at once by a step of the recipient.
#[derive(Clone, Debug)]
pub struct Sequential {
    order: Vec<ProcessorId>,
    next: usize,
    then_step: Option<ProcessorId>,
}

impl Sequential {
    pub fn new(participants: &[ProcessorId]) -> Self {
        let mut order = participants.to_vec();
        order.sort();
        Sequential {
            order,
            next: 0,
            then_step: None,
        }
    }
}

impl Adversary for Sequential {
    fn name(&self) -> String {
        "sequential".into()
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        if let Some(q) = self.then_step.take() {
            if !world.is_crashed(q) && world.has_work(q) {
                return Some(EventChoice::Step(q));
            }
        }
        if let Some(e) = world.network().oldest() {
            self.then_step = Some(e.dst);
            return Some(EventChoice::Deliver(e.id));
        }
        while let Some(&p) = self.order.get(self.next) {
            match world.role(p) {
                _ if world.is_crashed(p) => self.next += 1,
                Role::Returned(_) => self.next += 1,
                Role::Idle => return Some(EventChoice::Step(p)),
                Role::Running | Role::Responder => break,
            }
        }
        world.ready().oldest().map(|(_, p)| EventChoice::Step(p))
    }
}
