use super::{Adversary, Split};
use crate::communicate::{Op, Payload, Stat, Update};
use crate::ids::ArrayKind;
use crate::sim::{Envelope, EventChoice, Role, World};

/// Holds back every high-priority status announcement while some running
/// participant has not flipped 1, so that processors that flipped 0 finish
/// their phase first. Otherwise FIFO.
#[derive(Clone, Debug, Default)]
pub struct CoinInspector {
    split: Split,
}

fn is_antidote(e: &Envelope) -> bool {
    let Payload::Request { spec, .. } = &e.payload else {
        return false;
    };
    spec.array.kind() == ArrayKind::Status
        && matches!(
            spec.op,
            Op::Propagate(Update::Status {
                stat: Stat::HighPri,
                ..
            })
        )
}

/// Some live participant could still be hurt by seeing an antidote.
fn someone_exposed(world: &World) -> bool {
    world.participants().iter().any(|&p| {
        !world.is_crashed(p)
            && matches!(world.role(p), Role::Idle | Role::Running)
            && world.driver(p).is_none_or(|d| d.current_flip() != Some(1))
    })
}

impl Adversary for CoinInspector {
    fn name(&self) -> String {
        "coin-inspector".into()
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        self.split.scan(world, is_antidote);
        let free = self.split.first_free(world);
        let candidate = if someone_exposed(world) {
            free
        } else {
            match (free, self.split.first_held(world)) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        };
        super::oldest_of(world, candidate)
    }
}
