//! Schedulers. An adversary observes the whole world, including every coin
//! already flipped, and picks the next event. It never sees coins that have
//! not been flipped yet.
//!
//! Strategies return `None` to defer to the oldest pending obligation.

mod bubble;
mod crasher;
mod fifo;
mod inspector;
mod random;
mod sequential;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::ProcessorId;
use crate::sim::{EventChoice, RunLimits, World};

pub use bubble::Bubble;
pub use crasher::{CrashSchedule, Crasher};
pub use fifo::Fifo;
pub use inspector::CoinInspector;
pub use random::RandomOrder;
pub use sequential::Sequential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleRelease {
    pub p: u32,
    /// Event at which the processor left the bubble.
    pub at: u64,
    /// Envelopes to or from it that were held when it left.
    pub buffered: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub name: String,
    /// `(event, processor)` for every crash injected.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crashes: Vec<(u64, u32)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub releases: Vec<BubbleRelease>,
    /// Processors still bubbled at the end of the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bubbled: Vec<u32>,
    /// Held envelopes the fairness watchdog delivered anyway.
    #[serde(default)]
    pub leaks: u64,
}

pub trait Adversary {
    fn name(&self) -> String;

    /// The next event, or `None` to defer to the oldest obligation.
    fn choose(&mut self, world: &World) -> Option<EventChoice>;

    /// Called after every applied event, whoever chose it.
    fn observe(&mut self, _world: &World, _choice: EventChoice) {}

    fn report(&self) -> AdversaryReport {
        AdversaryReport {
            name: self.name(),
            ..AdversaryReport::default()
        }
    }
}

impl<A: Adversary + ?Sized> Adversary for Box<A> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn choose(&mut self, world: &World) -> Option<EventChoice> {
        (**self).choose(world)
    }

    fn observe(&mut self, world: &World, choice: EventChoice) {
        (**self).observe(world, choice)
    }

    fn report(&self) -> AdversaryReport {
        (**self).report()
    }
}

/// The given envelope versus the processor that has had
/// work longest; steps win ties.
fn oldest_of(world: &World, envelope: Option<u64>) -> Option<EventChoice> {
    let env = envelope.and_then(|id| world.envelope(id)).map(|e| (e.sent_at, EventChoice::Deliver(e.id)));
    let step = world.ready().oldest().map(|(s, p)| (s, EventChoice::Step(p)));
    match (env, step) {
        (Some(e), Some(s)) => Some(if s.0 <= e.0 { s.1 } else { e.1 }),
        (e, s) => e.or(s).map(|x| x.1),
    }
}

/// In-flight envelopes split into those the strategy releases and those it
/// holds back, both in id order. Envelopes taken by someone else are
/// dropped lazily.
#[derive(Clone, Debug, Default)]
struct Split {
    next: u64,
    free: BTreeSet<u64>,
    held: BTreeSet<u64>,
}

impl Split {
    /// Classifies envelopes sent since the last call.
    fn scan(&mut self, world: &World, mut hold: impl FnMut(&crate::sim::Envelope) -> bool) {
        let end = world.network().next_id();
        for id in self.next..end {
            if let Some(e) = world.envelope(id) {
                if hold(e) {
                    self.held.insert(id);
                } else {
                    self.free.insert(id);
                }
            }
        }
        self.next = end;
    }

    fn first_free(&mut self, world: &World) -> Option<u64> {
        while let Some(&id) = self.free.first() {
            if world.network().contains(id) {
                return Some(id);
            }
            self.free.pop_first();
        }
        None
    }

    fn first_held(&mut self, world: &World) -> Option<u64> {
        while let Some(&id) = self.held.first() {
            if world.network().contains(id) {
                return Some(id);
            }
            self.held.pop_first();
        }
        None
    }

    /// Re-examines held envelopes, releasing those `hold` no longer keeps.
    fn reclassify(&mut self, world: &World, mut hold: impl FnMut(&crate::sim::Envelope) -> bool) {
        let held = std::mem::take(&mut self.held);
        for id in held {
            if let Some(e) = world.envelope(id) {
                if hold(e) {
                    self.held.insert(id);
                } else {
                    self.free.insert(id);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    Fifo,
    Random,
    Sequential,
    CoinInspector,
    Crasher,
    Bubble,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 6] = [
        AdversaryKind::Fifo,
        AdversaryKind::Random,
        AdversaryKind::Sequential,
        AdversaryKind::CoinInspector,
        AdversaryKind::Crasher,
        AdversaryKind::Bubble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::Fifo => "fifo",
            AdversaryKind::Random => "random",
            AdversaryKind::Sequential => "sequential",
            AdversaryKind::CoinInspector => "coin-inspector",
            AdversaryKind::Crasher => "crasher",
            AdversaryKind::Bubble => "bubble",
        }
    }

    /// Default run limits. The sequential strategy keeps every participant
    /// but one waiting for a whole run, so it gets `B = 64n²`; the others
    /// get `8n²`.
    pub fn default_limits(self, n: usize) -> RunLimits {
        match self {
            AdversaryKind::Sequential => RunLimits::with_factor(n, 64),
            _ => RunLimits::for_n(n),
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown adversary {s:?}"))
    }
}

/// Strategy selection plus parameters. Crasher and bubble wrap `base`,
/// which must be a plain strategy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    #[serde(default = "default_base")]
    pub base: AdversaryKind,
    /// Crasher: processors to crash (`None` means the full budget `t`).
    #[serde(default)]
    pub crashes: Option<usize>,
    /// Crasher: crash times are drawn from `0..horizon` (`None` means `8n²`).
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Bubble: processors bubbled (`None` means `k/4`).
    #[serde(default)]
    pub bubble_size: Option<usize>,
    /// Bubble: envelopes buffered before release (`None` means `n/4`).
    #[serde(default)]
    pub threshold: Option<usize>,
}

fn default_base() -> AdversaryKind {
    AdversaryKind::Fifo
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("{0} cannot be used as a base strategy")]
    BadBase(AdversaryKind),
    #[error("crash schedule of {len} exceeds the budget t={t}")]
    OverBudget { len: usize, t: usize },
    #[error("bubble of {size} exceeds the {k} participants")]
    BubbleTooLarge { size: usize, k: usize },
}

impl AdversarySpec {
    pub fn new(kind: AdversaryKind) -> Self {
        AdversarySpec {
            kind,
            base: AdversaryKind::Fifo,
            crashes: None,
            horizon: None,
            bubble_size: None,
            threshold: None,
        }
    }

    /// Builds the strategy for a world with `n` processors, crash budget `t`
    /// and the given participants.
    pub fn build(
        &self,
        n: usize,
        t: usize,
        participants: &[ProcessorId],
        seed: u64,
    ) -> Result<Box<dyn Adversary + Send>, AdversaryError> {
        let plain = |kind: AdversaryKind| -> Result<Box<dyn Adversary + Send>, AdversaryError> {
            Ok(match kind {
                AdversaryKind::Fifo => Box::new(Fifo),
                AdversaryKind::Random => Box::new(RandomOrder::new(seed)),
                AdversaryKind::Sequential => Box::new(Sequential::new(participants)),
                AdversaryKind::CoinInspector => Box::new(CoinInspector::default()),
                other => return Err(AdversaryError::BadBase(other)),
            })
        };
        match self.kind {
            AdversaryKind::Crasher => {
                let count = self.crashes.unwrap_or(t);
                if count > t {
                    return Err(AdversaryError::OverBudget { len: count, t });
                }
                let horizon = self.horizon.unwrap_or(8 * (n as u64).pow(2));
                let schedule = CrashSchedule::random(seed, n, count, horizon);
                Ok(Box::new(Crasher::new(schedule, t, plain(self.base)?)?))
            }
            AdversaryKind::Bubble => {
                let size = self.bubble_size.unwrap_or(participants.len() / 4);
                if size > participants.len() {
                    return Err(AdversaryError::BubbleTooLarge {
                        size,
                        k: participants.len(),
                    });
                }
                let threshold = self.threshold.unwrap_or(n / 4);
                Ok(Box::new(Bubble::random(seed, participants, size, threshold, plain(self.base)?)))
            }
            kind => plain(kind),
        }
    }
}
