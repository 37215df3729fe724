//! Consistency checks between a full trace, the world's counters and a
//! fresh replay.

use std::collections::HashMap;

use super::trace::{EventKind, Milestone, Trace, TraceMode};
use super::{Counters, SimError, World, WorldConfig};
use crate::ids::ProcessorId;

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("the trace is not a full trace")]
    NotFull,
    #[error("event {index}: {what}")]
    Trace { index: u64, what: String },
    #[error("counter {name}: trace says {trace}, world says {world}")]
    Counter { name: &'static str, trace: u64, world: u64 },
    #[error("replay diverged at event {index}")]
    Diverged { index: u64 },
    #[error("replay digest {replay:016x} differs from {original:016x}")]
    Digest { original: u64, replay: u64 },
    #[error("replay failed: {0}")]
    Replay(#[from] SimError),
    #[error("trace header: {0}")]
    Config(#[from] super::ConfigError),
}

/// Tallies reconstructed from a full trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub events: u64,
    pub deliveries: u64,
    pub steps: u64,
    pub crashes: u64,
    pub envelopes: u64,
    pub calls: u64,
    pub completed_calls: u64,
}

/// Rebuilds envelope ids from the per-event send counts and checks that
/// every delivery names an envelope sent earlier, delivered once, by the
/// recorded sender, and that nobody sends after crashing.
pub fn tally(trace: &Trace) -> Result<Tally, AuditError> {
    if trace.header.mode != TraceMode::Full {
        return Err(AuditError::NotFull);
    }
    let mut t = Tally::default();
    let mut sender: Vec<u32> = Vec::new();
    let mut delivered: HashMap<u64, u64> = HashMap::new();
    let mut crashed = vec![false; trace.header.n];
    for (i, e) in trace.events.iter().enumerate() {
        let err = |what: String| AuditError::Trace { index: e.index, what };
        if e.index != i as u64 {
            return Err(err(format!("expected index {i}")));
        }
        t.events += 1;
        let sent = e.sent.ok_or_else(|| err("no send count".into()))?;
        match e.kind {
            EventKind::Deliver => {
                t.deliveries += 1;
                let id = e.envelope.ok_or_else(|| err("delivery without envelope".into()))?;
                let Some(&src) = sender.get(id as usize) else {
                    return Err(err(format!("envelope {id} was never sent")));
                };
                if e.src != Some(src) {
                    return Err(err(format!("envelope {id} was sent by p{src}, not {:?}", e.src)));
                }
                if let Some(first) = delivered.insert(id, e.index) {
                    return Err(err(format!("envelope {id} already delivered at {first}")));
                }
            }
            EventKind::Step => {
                t.steps += 1;
                let p = e.src.ok_or_else(|| err("step without processor".into()))?;
                if crashed[p as usize] {
                    return Err(err(format!("crashed p{p} took a step")));
                }
                sender.extend(std::iter::repeat_n(p, sent as usize));
            }
            EventKind::Crash => {
                t.crashes += 1;
                let p = e.src.ok_or_else(|| err("crash without processor".into()))?;
                crashed[p as usize] = true;
            }
        }
        if e.kind != EventKind::Step && sent != 0 {
            return Err(err(format!("{:?} event sent {sent} envelopes", e.kind)));
        }
        t.envelopes += u64::from(sent);
        for m in &e.milestones {
            match m {
                Milestone::CallStart { .. } => t.calls += 1,
                Milestone::CallComplete { .. } => t.completed_calls += 1,
                _ => {}
            }
        }
    }
    if t.events != trace.length {
        return Err(AuditError::Trace {
            index: trace.length,
            what: format!("{} events recorded but length is {}", t.events, trace.length),
        });
    }
    Ok(t)
}

/// The world's counters agree with what the full trace shows.
pub fn check_counters(trace: &Trace, counters: &Counters) -> Result<Tally, AuditError> {
    let t = tally(trace)?;
    let calls: u64 = counters.calls.iter().map(|&c| u64::from(c)).sum();
    for (name, trace, world) in [
        ("events", t.events, counters.events),
        ("deliveries", t.deliveries, counters.deliveries),
        ("steps", t.steps, counters.steps),
        ("crashes", t.crashes, counters.crashes),
        ("envelopes", t.envelopes, counters.envelopes),
        ("calls", t.calls, calls),
        ("completed_calls", t.completed_calls, counters.completed_calls),
    ] {
        if trace != world {
            return Err(AuditError::Counter { name, trace, world });
        }
    }
    Ok(t)
}

/// The world configuration a trace was recorded under.
pub fn config_of(trace: &Trace) -> WorldConfig {
    let h = &trace.header;
    WorldConfig {
        n: h.n,
        t: h.t,
        protocol: h.protocol,
        participants: h.participants.iter().map(|&p| ProcessorId(p)).collect(),
        seed: h.seed,
        trace: h.mode,
    }
}

/// Re-applies a full trace's choices to a fresh world built from its
/// header and checks that every recorded event and the digest come out
/// the same.
pub fn check_replay(trace: &Trace) -> Result<World, AuditError> {
    if trace.header.mode != TraceMode::Full {
        return Err(AuditError::NotFull);
    }
    let mut world = World::new(config_of(trace))?;
    for e in &trace.events {
        let choice = e.choice().ok_or(AuditError::Diverged { index: e.index })?;
        world.apply(choice)?;
    }
    let replay = world.trace();
    if let Some((a, _)) = trace
        .events
        .iter()
        .zip(&replay.events)
        .find(|(a, b)| a != b)
    {
        return Err(AuditError::Diverged { index: a.index });
    }
    if replay.events.len() != trace.events.len() {
        return Err(AuditError::Diverged {
            index: replay.events.len().min(trace.events.len()) as u64,
        });
    }
    if replay.digest != trace.digest {
        return Err(AuditError::Digest {
            original: trace.digest,
            replay: replay.digest,
        });
    }
    Ok(world)
}
