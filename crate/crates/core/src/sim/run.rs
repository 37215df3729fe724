//! Driving a world to completion under an adversary and the fairness
//! watchdog.

use serde::{Deserialize, Serialize};

use super::{EventChoice, SimError, World};
use crate::adversary::Adversary;

pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLimits {
    /// No obligation stays enabled for more than this many events. The
    /// watchdog steps in once one has waited half as long.
    pub fairness_bound: u64,
    pub max_events: u64,
}

impl RunLimits {
    /// `B = 8n²`, and an event cap of `max(10⁷, 4B)`.
    pub fn for_n(n: usize) -> Self {
        RunLimits::with_factor(n, 8)
    }

    /// `B = factor·n²`, and an event cap of `max(10⁷, 4B)`.
    pub fn with_factor(n: usize, factor: u64) -> Self {
        let b = factor * (n as u64).pow(2);
        RunLimits {
            fairness_bound: b,
            max_events: DEFAULT_MAX_EVENTS.max(4 * b),
        }
    }

    pub fn with_bound(mut self, b: u64) -> Self {
        self.fairness_bound = b;
        self
    }

    pub fn with_max_events(mut self, m: u64) -> Self {
        self.max_events = m;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub events: u64,
    /// Events the watchdog chose instead of the adversary.
    pub forced: u64,
    /// Times the adversary declined to choose.
    pub declined: u64,
}

/// Runs until every non-crashed participant has returned.
pub fn run<A: Adversary + ?Sized>(
    world: &mut World,
    adversary: &mut A,
    limits: RunLimits,
) -> Result<RunReport, SimError> {
    let mut report = RunReport {
        events: 0,
        forced: 0,
        declined: 0,
    };
    // Acting at half the bound leaves room for obligations that expire
    // together, since only one can be forced per event.
    let trigger = (limits.fairness_bound / 2).max(1);
    while !world.all_done() {
        if world.event() >= limits.max_events {
            return Err(SimError::LivenessTimeout {
                events: world.event(),
                undecided: world.undecided(),
                trace: Box::new(world.take_trace()),
            });
        }
        let now = world.event();
        let overdue = world
            .oldest_obligation()
            .filter(|&(since, _)| now - since >= trigger)
            .map(|(_, c)| c);
        let choice = match overdue {
            Some(c) => {
                report.forced += 1;
                world.counters_mut().forced += 1;
                c
            }
            None => match adversary.choose(world) {
                Some(c) => c,
                None => {
                    report.declined += 1;
                    match world.oldest_obligation() {
                        Some((_, c)) => c,
                        None => {
                            return Err(SimError::Stalled {
                                undecided: world.undecided(),
                            })
                        }
                    }
                }
            },
        };
        world.apply(choice)?;
        adversary.observe(world, choice);
    }
    report.events = world.event();
    Ok(report)
}

/// Applies a recorded choice sequence.
pub fn replay(world: &mut World, choices: impl IntoIterator<Item = EventChoice>) -> Result<(), SimError> {
    for c in choices {
        world.apply(c)?;
    }
    Ok(())
}
