//! The interface between protocol state machines and the engine.
//!
//! Protocols are explicit state machines: each computation step either
//! starts the next `communicate` call or returns. Keeping them as plain data
//! (clonable, hashable) is what lets the explorer fork and deduplicate
//! worlds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::communicate::{CallResult, CallSpec};
use crate::election::{Elect, ElectOutcome, ElectVerdict};
use crate::ids::{ElectKey, ProcessorId, SiftKey};
use crate::renaming::Rename;
use crate::sifting::{BasicPill, HeteroPill, ListBook, NaiveSift, SiftOutcome, SiftVerdict};
use crate::sim::coins::{Coins, Draw};
use crate::sim::trace::Milestone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "elect")]
    Elect,
    #[serde(rename = "rename")]
    Rename,
    #[serde(rename = "sift-basic")]
    SiftBasic,
    #[serde(rename = "sift-hetero")]
    SiftHetero,
    #[serde(rename = "sift-naive")]
    SiftNaive,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [
        ProtocolKind::Elect,
        ProtocolKind::Rename,
        ProtocolKind::SiftBasic,
        ProtocolKind::SiftHetero,
        ProtocolKind::SiftNaive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Elect => "elect",
            ProtocolKind::Rename => "rename",
            ProtocolKind::SiftBasic => "sift-basic",
            ProtocolKind::SiftHetero => "sift-hetero",
            ProtocolKind::SiftNaive => "sift-naive",
        }
    }

    pub fn is_sift(self) -> bool {
        matches!(
            self,
            ProtocolKind::SiftBasic | ProtocolKind::SiftHetero | ProtocolKind::SiftNaive
        )
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

/// The value returned by a top-level invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Sift(SiftOutcome),
    Elect(ElectOutcome),
    /// A name in `1..=n`.
    Name(u32),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Sift(o) => f.write_str(match o.verdict {
                SiftVerdict::Survive => "survive",
                SiftVerdict::Die => "die",
            }),
            Outcome::Elect(o) => f.write_str(match o.verdict {
                ElectVerdict::Win => "win",
                ElectVerdict::Lose => "lose",
            }),
            Outcome::Name(u) => write!(f, "name {u}"),
        }
    }
}

/// A protocol reached a state its correctness argument rules out.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("p{p}: participant list is empty at flip time")]
    EmptyList { p: u32 },
    #[error("p{p}: no uncontended name left to pick")]
    NoFreeName { p: u32 },
    #[error("p{p}: call result of the wrong kind")]
    UnexpectedResult { p: u32 },
}

/// Per-step context handed to a protocol.
pub struct Ctx<'a> {
    pub me: ProcessorId,
    pub n: usize,
    pub event: u64,
    pub coins: &'a mut Coins,
    pub lists: &'a mut ListBook,
    pub notes: &'a mut Vec<Milestone>,
}

impl Ctx<'_> {
    pub fn p(&self) -> u32 {
        self.me.0
    }

    pub fn draw(&mut self, d: Draw) -> u32 {
        self.coins.draw(self.me.index(), d)
    }

    pub fn note(&mut self, m: Milestone) {
        self.notes.push(m);
    }
}

/// One step of a sub-protocol.
#[derive(Clone, Debug)]
pub enum Step<T> {
    Call(CallSpec),
    Done(T),
}

impl<T> Step<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Step<U> {
        match self {
            Step::Call(c) => Step::Call(c),
            Step::Done(t) => Step::Done(f(t)),
        }
    }
}

pub type StepResult<T> = Result<Step<T>, Fault>;

/// The state machine run by one participant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Driver {
    SiftBasic(BasicPill),
    SiftHetero(HeteroPill),
    SiftNaive(NaiveSift),
    Elect(Elect),
    Rename(Rename),
}

impl Driver {
    pub fn new(kind: ProtocolKind, n: usize) -> Self {
        match kind {
            ProtocolKind::SiftBasic => Driver::SiftBasic(BasicPill::new(SiftKey::SOLO)),
            ProtocolKind::SiftHetero => Driver::SiftHetero(HeteroPill::new(SiftKey::SOLO)),
            ProtocolKind::SiftNaive => Driver::SiftNaive(NaiveSift::new(SiftKey::SOLO)),
            ProtocolKind::Elect => Driver::Elect(Elect::new(ElectKey::Solo)),
            ProtocolKind::Rename => Driver::Rename(Rename::new(n)),
        }
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> StepResult<Outcome> {
        Ok(match self {
            Driver::SiftBasic(s) => s.start(cx).map(Outcome::Sift),
            Driver::SiftHetero(s) => s.start(cx).map(Outcome::Sift),
            Driver::SiftNaive(s) => s.start(cx).map(Outcome::Sift),
            Driver::Elect(e) => e.start(cx).map(Outcome::Elect),
            Driver::Rename(r) => r.start(cx).map(Outcome::Name),
        })
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<Outcome> {
        Ok(match self {
            Driver::SiftBasic(s) => s.resume(cx, result)?.map(Outcome::Sift),
            Driver::SiftHetero(s) => s.resume(cx, result)?.map(Outcome::Sift),
            Driver::SiftNaive(s) => s.resume(cx, result)?.map(Outcome::Sift),
            Driver::Elect(e) => e.resume(cx, result)?.map(Outcome::Elect),
            Driver::Rename(r) => r.resume(cx, result)?.map(Outcome::Name),
        })
    }

    /// The coin realized in the sifting instance currently running, if any.
    pub fn current_flip(&self) -> Option<u32> {
        match self {
            Driver::SiftBasic(s) => s.flip(),
            Driver::SiftHetero(s) => s.flip(),
            Driver::SiftNaive(s) => s.flip(),
            Driver::Elect(e) => e.current_flip(),
            Driver::Rename(r) => r.current_flip(),
        }
    }

    /// The election round currently being played, if any.
    pub fn current_round(&self) -> Option<u32> {
        match self {
            Driver::Elect(e) => Some(e.round()),
            Driver::Rename(r) => r.current_round(),
            _ => None,
        }
    }
}
