//! Execution traces and their line-delimited JSON form.
//!
//! A trace file starts with one header line followed by one line per
//! recorded event:
//!
//! ```text
//! {"schema":"poisonpill-trace/1","n":3,"t":1,"protocol":"elect",...}
//! {"index":0,"kind":"step","src":0,"dst":null,"envelope":null,"digest":"…","tags":["invoke",...],"milestones":[...]}
//! ```
//!
//! In `full` mode every event is recorded, together with the number of
//! envelopes it sent, and the trace can be replayed choice by choice. In
//! `milestones` mode only events that produced a milestone are kept.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::communicate::{CallKind, Entry};
use crate::election::{ElectOutcome, PreRoundResult};
use crate::ids::{ArrayId, ElectKey, ProcessorId, SiftKey};
use crate::idset::IdSet;
use crate::protocol::{Outcome, ProtocolKind};
use crate::sifting::SiftVerdict;
use crate::sim::EventChoice;

pub const SCHEMA: &str = "poisonpill-trace/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Off,
    #[default]
    Milestones,
    Full,
}

/// A protocol-level record attached to the event that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "tag")]
pub enum Milestone {
    Invoke {
        p: u32,
        protocol: ProtocolKind,
    },
    Respond {
        p: u32,
        outcome: Outcome,
    },
    CallStart {
        p: u32,
        call: u32,
        kind: CallKind,
        array: ArrayId,
    },
    CallComplete {
        p: u32,
        call: u32,
        acks: u32,
        /// Recorded in full traces only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        responders: Option<IdSet>,
    },
    LateAck {
        p: u32,
        call: u32,
        from: u32,
    },
    /// A responder's view of one entry changed.
    ViewChange {
        at: u32,
        array: ArrayId,
        index: u32,
        from: Entry,
        to: Entry,
    },
    /// A propagate carried a value incomparable with the responder's view.
    ViewConflict {
        at: u32,
        array: ArrayId,
        from: u32,
    },
    CommitPropagated {
        p: u32,
        key: SiftKey,
    },
    Flip {
        p: u32,
        key: SiftKey,
        bias: f64,
        coin: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        list: Option<IdSet>,
    },
    PriorityPropagated {
        p: u32,
        key: SiftKey,
    },
    SiftVerdict {
        p: u32,
        key: SiftKey,
        verdict: SiftVerdict,
        flip: Option<u32>,
        /// The `L` set of a low-priority survivor.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_set: Option<IdSet>,
    },
    ElectInvoke {
        p: u32,
        key: ElectKey,
    },
    Doorway {
        p: u32,
        key: ElectKey,
        proceed: bool,
    },
    RoundPropagated {
        p: u32,
        key: ElectKey,
        round: u32,
    },
    PreRound {
        p: u32,
        key: ElectKey,
        round: u32,
        max_other: u32,
        result: PreRoundResult,
    },
    RoundEntered {
        p: u32,
        key: ElectKey,
        round: u32,
    },
    ElectVerdict {
        p: u32,
        key: ElectKey,
        outcome: ElectOutcome,
    },
    IterationStart {
        p: u32,
        iteration: u32,
    },
    /// `view` holds the names (0-based) seen contended at pick time.
    Pick {
        p: u32,
        iteration: u32,
        name: u32,
        view: IdSet,
    },
    IterationEnd {
        p: u32,
        iteration: u32,
        name: u32,
        won: bool,
    },
    Crashed {
        p: u32,
    },
}

impl Milestone {
    pub fn tag(&self) -> &'static str {
        match self {
            Milestone::Invoke { .. } => "invoke",
            Milestone::Respond { .. } => "respond",
            Milestone::CallStart { .. } => "call_start",
            Milestone::CallComplete { .. } => "call_complete",
            Milestone::LateAck { .. } => "late_ack",
            Milestone::ViewChange { .. } => "view_change",
            Milestone::ViewConflict { .. } => "view_conflict",
            Milestone::CommitPropagated { .. } => "commit_propagated",
            Milestone::Flip { .. } => "flip",
            Milestone::PriorityPropagated { .. } => "priority_propagated",
            Milestone::SiftVerdict { .. } => "sift_verdict",
            Milestone::ElectInvoke { .. } => "elect_invoke",
            Milestone::Doorway { .. } => "doorway",
            Milestone::RoundPropagated { .. } => "round_propagated",
            Milestone::PreRound { .. } => "pre_round",
            Milestone::RoundEntered { .. } => "round_entered",
            Milestone::ElectVerdict { .. } => "elect_verdict",
            Milestone::IterationStart { .. } => "iteration_start",
            Milestone::Pick { .. } => "pick",
            Milestone::IterationEnd { .. } => "iteration_end",
            Milestone::Crashed { .. } => "crashed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Deliver,
    Step,
    Crash,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub kind: EventKind,
    pub src: Option<u32>,
    pub dst: Option<u32>,
    pub envelope: Option<u64>,
    /// Digest of the delivered payload, or of the step's outgoing batch.
    #[serde(with = "hex64")]
    pub digest: u64,
    /// Envelopes sent by this event; full traces only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent: Option<u32>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub milestones: Vec<Milestone>,
}

impl TraceEvent {
    /// The choice that produced this event.
    pub fn choice(&self) -> Option<EventChoice> {
        match self.kind {
            EventKind::Deliver => self.envelope.map(EventChoice::Deliver),
            EventKind::Step => self.src.map(|p| EventChoice::Step(ProcessorId(p))),
            EventKind::Crash => self.src.map(|p| EventChoice::Crash(ProcessorId(p))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub n: usize,
    pub t: usize,
    pub protocol: ProtocolKind,
    pub participants: Vec<u32>,
    pub seed: u64,
    pub mode: TraceMode,
    /// Free-form provenance (adversary name, config digest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    /// Running digest over every applied event, recorded or not.
    #[serde(with = "hex64")]
    pub digest: u64,
    /// Total events applied.
    pub length: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace is empty")]
    Empty,
    #[error("unsupported trace schema {0:?}")]
    Schema(String),
}

#[derive(Serialize, Deserialize)]
struct Footer {
    #[serde(with = "hex64")]
    digest: u64,
    length: u64,
}

impl Trace {
    pub fn milestones(&self) -> impl Iterator<Item = (u64, &Milestone)> {
        self.events
            .iter()
            .flat_map(|e| e.milestones.iter().map(move |m| (e.index, m)))
    }

    /// Writes the header, one line per event, then a footer line holding
    /// the running digest.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceIoError> {
        serde_json::to_writer(&mut w, &self.header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &Footer {
                digest: self.digest,
                length: self.length,
            },
        )
        .map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceIoError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(TraceIoError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(&first?).map_err(|source| TraceIoError::Parse { line: 1, source })?;
        if header.schema != SCHEMA {
            return Err(TraceIoError::Schema(header.schema));
        }
        let mut events = Vec::new();
        let mut footer = None;
        for (i, line) in lines {
            let line = line?;
            if footer.is_some() {
                return Err(TraceIoError::Parse {
                    line: i + 1,
                    source: serde::de::Error::custom("content after footer"),
                });
            }
            match serde_json::from_str::<TraceEvent>(&line) {
                Ok(e) => events.push(e),
                Err(err) => match serde_json::from_str::<Footer>(&line) {
                    Ok(f) => footer = Some(f),
                    Err(_) => return Err(TraceIoError::Parse { line: i + 1, source: err }),
                },
            }
        }
        let footer = footer.unwrap_or(Footer {
            digest: 0,
            length: events.last().map_or(0, |e| e.index + 1),
        });
        Ok(Trace {
            header,
            events,
            digest: footer.digest,
            length: footer.length,
        })
    }
}

mod hex64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}
