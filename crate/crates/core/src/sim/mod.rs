//! The discrete-event simulator: a world of processors, an adversary that
//! picks each next event, and the trace they produce.

pub mod audit;
pub mod coins;
pub mod network;
pub mod run;
pub mod trace;
pub mod world;

use serde::{Deserialize, Serialize};

use crate::ids::ProcessorId;
use crate::protocol::Fault;

pub use coins::{Coins, Draw, Script};
pub use network::{Envelope, Network, Ready};
pub use run::{run, RunLimits, RunReport};
pub use trace::{Milestone, Trace, TraceMode};
pub use world::{max_crashes, Role, World, WorldConfig};

/// One adversary decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", content = "target")]
pub enum EventChoice {
    /// Deliver the in-flight envelope with this id.
    Deliver(u64),
    /// Let the processor take a local step.
    Step(ProcessorId),
    Crash(ProcessorId),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("n must be at least 1")]
    NoProcessors,
    #[error("crash budget t={t} exceeds {max} for n={n}")]
    CrashBudget { t: usize, n: usize, max: usize },
    #[error("no participants")]
    NoParticipants,
    #[error("participant p{p} is not below n={n}")]
    ParticipantOutOfRange { p: u32, n: usize },
    #[error("participant p{p} listed twice")]
    DuplicateParticipant { p: u32 },
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("event {event}: {choice:?} is not enabled")]
    NotEnabled { event: u64, choice: EventChoice },
    #[error(transparent)]
    Protocol(#[from] Fault),
    #[error("no termination after {events} events; undecided: {undecided:?}")]
    LivenessTimeout {
        events: u64,
        undecided: Vec<ProcessorId>,
        trace: Box<Trace>,
    },
    #[error("nothing is enabled but {undecided:?} have not returned")]
    Stalled { undecided: Vec<ProcessorId> },
}

/// Cost counters maintained by the world.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events: u64,
    pub deliveries: u64,
    pub steps: u64,
    pub crashes: u64,
    /// Envelopes sent, requests and ACKs alike.
    pub envelopes: u64,
    pub requests: u64,
    /// Calls started, per processor.
    pub calls: Vec<u32>,
    pub completed_calls: u64,
    pub late_acks: u64,
    pub unknown_acks: u64,
    pub duplicate_acks: u64,
    pub conflicts: u64,
    /// Events the fairness watchdog forced.
    pub forced: u64,
    /// Longest an obligation waited before its event, in events.
    pub max_deferral: u64,
}

impl Counters {
    pub fn new(n: usize) -> Self {
        Counters {
            calls: vec![0; n],
            ..Counters::default()
        }
    }

    pub fn acks(&self) -> u64 {
        self.envelopes - self.requests
    }

    pub fn max_calls(&self) -> u32 {
        self.calls.iter().copied().max().unwrap_or(0)
    }
}
