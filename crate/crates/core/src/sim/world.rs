//! The simulated system: processors, their stores and protocol state, the
//! network, and the event semantics.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rustc_hash::FxHasher;
use serde::{Deserialize, Serialize};

use super::coins::Coins;
use super::network::{Envelope, Network, Ready};
use super::trace::{EventKind, Milestone, Trace, TraceEvent, TraceHeader, TraceMode, SCHEMA};
use super::{ConfigError, Counters, EventChoice, SimError};
use crate::communicate::{Blanks, CallSpec, EntryChange, Payload, PendingCall, Store};
use crate::election::HistoryTracker;
use crate::ids::{ArrayId, ProcessorId};
use crate::idset::IdSet;
use crate::protocol::{Ctx, Driver, Outcome, ProtocolKind, Step};
use crate::sifting::ListBook;

/// Largest crash budget tolerated by `n` processors: `⌈n/2⌉ − 1`.
pub fn max_crashes(n: usize) -> usize {
    n.div_ceil(2).saturating_sub(1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n: usize,
    pub t: usize,
    pub protocol: ProtocolKind,
    pub participants: Vec<ProcessorId>,
    pub seed: u64,
    #[serde(default)]
    pub trace: TraceMode,
}

impl WorldConfig {
    /// All of `0..k` participate.
    pub fn new(n: usize, k: usize, t: usize, protocol: ProtocolKind, seed: u64) -> Self {
        WorldConfig {
            n,
            t,
            protocol,
            participants: (0..k).map(ProcessorId::from).collect(),
            seed,
            trace: TraceMode::default(),
        }
    }

    pub fn with_trace(mut self, mode: TraceMode) -> Self {
        self.trace = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoProcessors);
        }
        if self.t > max_crashes(self.n) {
            return Err(ConfigError::CrashBudget {
                t: self.t,
                n: self.n,
                max: max_crashes(self.n),
            });
        }
        if self.participants.is_empty() {
            return Err(ConfigError::NoParticipants);
        }
        let mut seen = FixedBitSet::with_capacity(self.n);
        for &p in &self.participants {
            if p.index() >= self.n {
                return Err(ConfigError::ParticipantOutOfRange { p: p.0, n: self.n });
            }
            if seen.put(p.index()) {
                return Err(ConfigError::DuplicateParticipant { p: p.0 });
            }
        }
        Ok(())
    }
}

/// Where a processor stands with respect to its own invocation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Not a participant; runs only the responder logic.
    Responder,
    /// A participant whose invocation has not started.
    Idle,
    Running,
    Returned(Outcome),
}

#[derive(Clone, Debug)]
pub struct Proc {
    store: Store,
    mailbox: Vec<Envelope>,
    role: Role,
    driver: Option<Driver>,
    pending: Option<PendingCall>,
    next_call: u32,
    crashed: bool,
}

/// Bookkeeping produced by the last applied event.
#[derive(Clone, Copy, Debug, Default)]
struct EventInfo {
    src: Option<u32>,
    dst: Option<u32>,
    envelope: Option<u64>,
    digest: u64,
    sent: u32,
}

#[derive(Clone, Debug)]
struct Recorder {
    mode: TraceMode,
    events: Vec<TraceEvent>,
    digest: u64,
}

#[derive(Clone, Debug)]
pub struct World {
    config: WorldConfig,
    n: usize,
    procs: Vec<Proc>,
    coins: Coins,
    lists: ListBook,
    blanks: Blanks,
    net: Network,
    ready: Ready,
    event: u64,
    crashed: usize,
    live_participants: usize,
    returned: usize,
    counters: Counters,
    history: HistoryTracker,
    recorder: Recorder,
    notes: Vec<Milestone>,
    out: Vec<(ProcessorId, Payload)>,
    changes: Vec<EntryChange>,
}

fn fx(parts: &[u64]) -> u64 {
    let mut h = FxHasher::default();
    for &x in parts {
        h.write_u64(x);
    }
    h.finish()
}

fn payload_digest(src: ProcessorId, dst: ProcessorId, payload: &Payload) -> u64 {
    let mut h = FxHasher::default();
    h.write_u32(src.0);
    h.write_u32(dst.0);
    match payload {
        Payload::Request { call, spec } => {
            h.write_u8(1);
            h.write_u32(*call);
            spec.hash(&mut h);
        }
        Payload::Ack { call, view } => {
            h.write_u8(2);
            h.write_u32(*call);
            h.write_u8(u8::from(view.is_some()));
        }
    }
    h.finish()
}

impl World {
    pub fn new(config: WorldConfig) -> Result<World, ConfigError> {
        config.validate()?;
        let n = config.n;
        let mut procs: Vec<Proc> = (0..n)
            .map(|_| Proc {
                store: Store::default(),
                mailbox: Vec::new(),
                role: Role::Responder,
                driver: None,
                pending: None,
                next_call: 0,
                crashed: false,
            })
            .collect();
        let mut ready = Ready::new(n);
        let mut sorted = config.participants.clone();
        sorted.sort();
        for p in &sorted {
            let proc = &mut procs[p.index()];
            proc.role = Role::Idle;
            proc.driver = Some(Driver::new(config.protocol, n));
            ready.mark(p.index(), 0);
        }
        Ok(World {
            n,
            procs,
            coins: Coins::seeded(config.seed, n),
            lists: ListBook::default(),
            blanks: Blanks::new(n),
            net: Network::default(),
            ready,
            event: 0,
            crashed: 0,
            live_participants: sorted.len(),
            returned: 0,
            counters: Counters::new(n),
            history: HistoryTracker::new(n),
            recorder: Recorder {
                mode: config.trace,
                events: Vec::new(),
                digest: fx(&[config.seed, n as u64]),
            },
            notes: Vec::new(),
            out: Vec::new(),
            changes: Vec::new(),
            config,
        })
    }

    /// Replaces the coin source (the explorer scripts coins).
    pub fn set_coins(&mut self, coins: Coins) {
        self.coins = coins;
    }

    pub fn coins(&self) -> &Coins {
        &self.coins
    }

    pub fn coins_mut(&mut self) -> &mut Coins {
        &mut self.coins
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.config.t
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.config.protocol
    }

    /// Index of the next event.
    pub fn event(&self) -> u64 {
        self.event
    }

    pub fn is_crashed(&self, p: ProcessorId) -> bool {
        self.procs[p.index()].crashed
    }

    pub fn crashed_count(&self) -> usize {
        self.crashed
    }

    pub fn crash_budget_left(&self) -> usize {
        self.config.t - self.crashed
    }

    pub fn is_participant(&self, p: ProcessorId) -> bool {
        !matches!(self.procs[p.index()].role, Role::Responder)
    }

    pub fn participants(&self) -> &[ProcessorId] {
        &self.config.participants
    }

    pub fn role(&self, p: ProcessorId) -> &Role {
        &self.procs[p.index()].role
    }

    pub fn outcome(&self, p: ProcessorId) -> Option<Outcome> {
        match self.procs[p.index()].role {
            Role::Returned(o) => Some(o),
            _ => None,
        }
    }

    pub fn driver(&self, p: ProcessorId) -> Option<&Driver> {
        self.procs[p.index()].driver.as_ref()
    }

    pub fn pending_call(&self, p: ProcessorId) -> Option<&PendingCall> {
        self.procs[p.index()].pending.as_ref()
    }

    pub fn store(&self, p: ProcessorId) -> &Store {
        &self.procs[p.index()].store
    }

    pub fn mailbox(&self, p: ProcessorId) -> &[Envelope] {
        &self.procs[p.index()].mailbox
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn envelope(&self, id: u64) -> Option<&Envelope> {
        self.net.get(id)
    }

    /// Processors with work to do.
    pub fn ready(&self) -> &Ready {
        &self.ready
    }

    pub fn has_work(&self, p: ProcessorId) -> bool {
        self.ready.since(p.index()).is_some()
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn counters_mut(&mut self) -> &mut Counters {
        &mut self.counters
    }

    pub fn history(&self) -> &HistoryTracker {
        &self.history
    }

    pub fn lists(&self) -> &ListBook {
        &self.lists
    }

    /// Every non-crashed participant has returned.
    pub fn all_done(&self) -> bool {
        self.returned >= self.live_participants
    }

    pub fn returned_count(&self) -> usize {
        self.returned
    }

    /// Non-crashed participants that have not returned.
    pub fn undecided(&self) -> Vec<ProcessorId> {
        (0..self.n)
            .map(ProcessorId::from)
            .filter(|&p| {
                let pr = &self.procs[p.index()];
                !pr.crashed && matches!(pr.role, Role::Idle | Role::Running)
            })
            .collect()
    }

    pub fn outcomes(&self) -> Vec<(ProcessorId, Outcome)> {
        (0..self.n)
            .filter_map(|p| match self.procs[p].role {
                Role::Returned(o) => Some((ProcessorId::from(p), o)),
                _ => None,
            })
            .collect()
    }

    /// Every legal next event.
    pub fn enabled_events(&self) -> Vec<EventChoice> {
        let mut v: Vec<EventChoice> = self.net.iter().map(|e| EventChoice::Deliver(e.id)).collect();
        for p in 0..self.n {
            if !self.procs[p].crashed {
                v.push(EventChoice::Step(ProcessorId::from(p)));
            }
        }
        if self.crashed < self.config.t {
            for p in 0..self.n {
                if !self.procs[p].crashed {
                    v.push(EventChoice::Crash(ProcessorId::from(p)));
                }
            }
        }
        v
    }

    pub fn is_enabled(&self, choice: EventChoice) -> bool {
        match choice {
            EventChoice::Deliver(id) => self.net.contains(id),
            EventChoice::Step(p) => p.index() < self.n && !self.procs[p.index()].crashed,
            EventChoice::Crash(p) => {
                p.index() < self.n && !self.procs[p.index()].crashed && self.crashed < self.config.t
            }
        }
    }

    /// The longest-deferred obligation: the oldest envelope from a
    /// non-crashed sender, or the processor that has had work longest
    /// (steps win ties). Returns it with the event index at which it became
    /// enabled.
    pub fn oldest_obligation(&self) -> Option<(u64, EventChoice)> {
        let env = self
            .net
            .oldest_obligation()
            .map(|e| (e.sent_at, EventChoice::Deliver(e.id)));
        let step = self.ready.oldest().map(|(s, p)| (s, EventChoice::Step(p)));
        match (env, step) {
            (Some(e), Some(s)) => Some(if s.0 <= e.0 { s } else { e }),
            (e, s) => e.or(s),
        }
    }

    /// Applies one event.
    pub fn apply(&mut self, choice: EventChoice) -> Result<(), SimError> {
        if !self.is_enabled(choice) {
            return Err(SimError::NotEnabled {
                event: self.event,
                choice,
            });
        }
        let index = self.event;
        let since = match choice {
            EventChoice::Deliver(id) => self
                .net
                .get(id)
                .filter(|e| !self.procs[e.src.index()].crashed)
                .map(|e| e.sent_at),
            EventChoice::Step(p) => self.ready.since(p.index()),
            EventChoice::Crash(_) => None,
        };
        if let Some(s) = since {
            self.counters.max_deferral = self.counters.max_deferral.max(index - s);
        }
        let info = match choice {
            EventChoice::Deliver(id) => {
                let env = self.net.take(id).expect("enabled envelope is in flight");
                let dst = env.dst;
                let info = EventInfo {
                    src: Some(env.src.0),
                    dst: Some(dst.0),
                    envelope: Some(id),
                    digest: payload_digest(env.src, dst, &env.payload),
                    sent: 0,
                };
                let proc = &mut self.procs[dst.index()];
                proc.mailbox.push(env);
                if !proc.crashed {
                    self.ready.mark(dst.index(), index);
                }
                self.counters.deliveries += 1;
                info
            }
            EventChoice::Step(p) => {
                self.counters.steps += 1;
                self.step(p, index)?
            }
            EventChoice::Crash(p) => {
                let proc = &mut self.procs[p.index()];
                proc.crashed = true;
                if matches!(proc.role, Role::Idle | Role::Running) {
                    self.live_participants -= 1;
                }
                self.crashed += 1;
                self.ready.clear(p.index());
                self.counters.crashes += 1;
                self.notes.push(Milestone::Crashed { p: p.0 });
                EventInfo {
                    src: Some(p.0),
                    ..EventInfo::default()
                }
            }
        };
        let procs = &self.procs;
        self.net.advance_cursor(|p| procs[p.index()].crashed);
        self.ready.prune();
        self.record(index, choice, info);
        self.event += 1;
        self.counters.events = self.event;
        Ok(())
    }

    fn record(&mut self, index: u64, choice: EventChoice, info: EventInfo) {
        let kind = match choice {
            EventChoice::Deliver(_) => EventKind::Deliver,
            EventChoice::Step(_) => EventKind::Step,
            EventChoice::Crash(_) => EventKind::Crash,
        };
        let r = &mut self.recorder;
        r.digest = fx(&[
            r.digest,
            index,
            kind as u64,
            info.src.map_or(u64::MAX, u64::from),
            info.dst.map_or(u64::MAX, u64::from),
            info.envelope.unwrap_or(u64::MAX),
            info.digest,
            u64::from(info.sent),
        ]);
        let keep = match r.mode {
            TraceMode::Off => false,
            TraceMode::Milestones => !self.notes.is_empty(),
            TraceMode::Full => true,
        };
        if !keep {
            self.notes.clear();
            return;
        }
        let milestones = std::mem::take(&mut self.notes);
        r.events.push(TraceEvent {
            index,
            kind,
            src: info.src,
            dst: info.dst,
            envelope: info.envelope,
            digest: info.digest,
            sent: (r.mode == TraceMode::Full).then_some(info.sent),
            tags: milestones.iter().map(|m| m.tag().to_string()).collect(),
            milestones,
        });
    }

    fn step(&mut self, p: ProcessorId, index: u64) -> Result<EventInfo, SimError> {
        let pi = p.index();
        // An idle participant with mail answers it first and stays ready:
        // its invocation starts at a step that finds the mailbox empty.
        let invoke = self.procs[pi].role == Role::Idle && self.procs[pi].mailbox.is_empty();
        if invoke || self.procs[pi].role != Role::Idle {
            self.ready.clear(pi);
        }
        let n = self.n;
        let mode = self.recorder.mode;
        let World {
            procs,
            coins,
            lists,
            blanks,
            notes,
            out,
            changes,
            counters,
            history,
            returned,
            ..
        } = self;
        let proc = &mut procs[pi];
        let mut action = None;
        if invoke {
            proc.role = Role::Running;
            notes.push(Milestone::Invoke {
                p: p.0,
                protocol: self.config.protocol,
            });
            history.invoke(pi);
            let mut cx = Ctx {
                me: p,
                n,
                event: index,
                coins,
                lists,
                notes,
            };
            action = Some(proc.driver.as_mut().expect("participant has a driver").start(&mut cx)?);
        }
        if let Some(a) = action.take() {
            settle(proc, p, n, index, a, mode, notes, out, counters, history, returned);
        }

        let mut mail = std::mem::take(&mut proc.mailbox);
        for env in mail.drain(..) {
            match env.payload {
                Payload::Request { call, spec } => {
                    let track = match mode {
                        TraceMode::Full => true,
                        TraceMode::Milestones => spec.array == ArrayId::Contended,
                        TraceMode::Off => false,
                    };
                    changes.clear();
                    let (view, join) = proc
                        .store
                        .respond(&spec, blanks, if track { Some(&mut *changes) } else { None });
                    if join.conflict {
                        counters.conflicts += 1;
                        notes.push(Milestone::ViewConflict {
                            at: p.0,
                            array: spec.array,
                            from: env.src.0,
                        });
                    }
                    for &(index_in_array, from, to) in changes.iter() {
                        notes.push(Milestone::ViewChange {
                            at: p.0,
                            array: spec.array,
                            index: index_in_array,
                            from,
                            to,
                        });
                    }
                    out.push((env.src, Payload::Ack { call, view }));
                }
                Payload::Ack { call, view } => match &mut proc.pending {
                    Some(pc) if pc.id == call => {
                        if !pc.on_ack(env.src.index(), view) {
                            counters.duplicate_acks += 1;
                        }
                    }
                    _ if call < proc.next_call => {
                        counters.late_acks += 1;
                        if mode == TraceMode::Full {
                            notes.push(Milestone::LateAck {
                                p: p.0,
                                call,
                                from: env.src.0,
                            });
                        }
                    }
                    _ => counters.unknown_acks += 1,
                },
            }
        }
        proc.mailbox = mail;

        if proc.pending.as_ref().is_some_and(|pc| pc.ready(n)) {
            let pc = proc.pending.take().expect("checked above");
            counters.completed_calls += 1;
            notes.push(Milestone::CallComplete {
                p: p.0,
                call: pc.id,
                acks: pc.acks() as u32,
                responders: (mode == TraceMode::Full).then(|| IdSet::new(pc.responders.clone())),
            });
            let mut cx = Ctx {
                me: p,
                n,
                event: index,
                coins,
                lists,
                notes,
            };
            let a = proc
                .driver
                .as_mut()
                .expect("a processor with a call has a driver")
                .resume(&mut cx, pc.finish())?;
            settle(proc, p, n, index, a, mode, notes, out, counters, history, returned);
        }

        let mut h = FxHasher::default();
        let sent = out.len() as u32;
        for (dst, payload) in out.drain(..) {
            h.write_u64(payload_digest(p, dst, &payload));
            self.net.send(p, dst, payload, index);
        }
        counters.envelopes += u64::from(sent);
        Ok(EventInfo {
            src: Some(p.0),
            dst: None,
            envelope: None,
            digest: h.finish(),
            sent,
        })
    }

    /// The recorded trace so far.
    pub fn trace(&self) -> Trace {
        Trace {
            header: self.trace_header(),
            events: self.recorder.events.clone(),
            digest: self.recorder.digest,
            length: self.event,
        }
    }

    /// Moves the recorded events out of the world.
    pub fn take_trace(&mut self) -> Trace {
        Trace {
            header: self.trace_header(),
            events: std::mem::take(&mut self.recorder.events),
            digest: self.recorder.digest,
            length: self.event,
        }
    }

    pub fn trace_digest(&self) -> u64 {
        self.recorder.digest
    }

    pub fn trace_mode(&self) -> TraceMode {
        self.recorder.mode
    }

    fn trace_header(&self) -> TraceHeader {
        TraceHeader {
            schema: SCHEMA.to_string(),
            n: self.n,
            t: self.config.t,
            protocol: self.config.protocol,
            participants: self.config.participants.iter().map(|p| p.0).collect(),
            seed: self.config.seed,
            mode: self.recorder.mode,
            note: None,
        }
    }

    /// An ACK for a call its recipient has already finished. Processing one
    /// only bumps a counter.
    pub fn is_late(&self, e: &Envelope) -> bool {
        let Payload::Ack { call, .. } = e.payload else {
            return false;
        };
        let proc = &self.procs[e.dst.index()];
        call < proc.next_call && proc.pending.as_ref().is_none_or(|pc| pc.id != call)
    }

    /// A digest of the behaviourally relevant state: everything except
    /// envelope ids, event counters, coin streams, the trace and late ACKs.
    /// In-flight and delivered-but-unprocessed envelopes are hashed as
    /// multisets.
    pub fn fingerprint(&self) -> u128 {
        let mut h = Xxh3Hasher::default();
        self.crashed.hash(&mut h);
        self.lists.hash(&mut h);
        self.history.hash(&mut h);
        for proc in &self.procs {
            proc.crashed.hash(&mut h);
            proc.role.hash(&mut h);
            proc.driver.hash(&mut h);
            proc.pending.as_ref().map(|c| (c.id, &c.spec, &c.responders, &c.views)).hash(&mut h);
            proc.next_call.hash(&mut h);
            proc.store.hash(&mut h);
            let mut mail: Vec<u64> = proc.mailbox.iter().filter(|e| !self.is_late(e)).map(content_hash).collect();
            mail.sort_unstable();
            mail.hash(&mut h);
        }
        let mut flight: Vec<u64> = self.net.iter().filter(|e| !self.is_late(e)).map(content_hash).collect();
        flight.sort_unstable();
        flight.hash(&mut h);
        h.finish128()
    }
}

/// Hash of an envelope's source, destination and payload, including the
/// contents of any carried view.
pub fn content_hash(e: &Envelope) -> u64 {
    let mut h = Xxh3Hasher::default();
    e.src.hash(&mut h);
    e.dst.hash(&mut h);
    e.payload.hash(&mut h);
    h.finish()
}

#[derive(Default)]
struct Xxh3Hasher(xxhash_rust::xxh3::Xxh3);

impl Hasher for Xxh3Hasher {
    fn write(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    fn finish(&self) -> u64 {
        self.0.digest()
    }
}

impl Xxh3Hasher {
    fn finish128(self) -> u128 {
        self.0.digest128()
    }
}

/// Carries out a protocol action: starts the requested call, or records
/// the return value.
#[allow(clippy::too_many_arguments)]
fn settle(
    proc: &mut Proc,
    p: ProcessorId,
    n: usize,
    index: u64,
    action: Step<Outcome>,
    mode: TraceMode,
    notes: &mut Vec<Milestone>,
    out: &mut Vec<(ProcessorId, Payload)>,
    counters: &mut Counters,
    history: &mut HistoryTracker,
    returned: &mut usize,
) {
    let _ = mode;
    match action {
        Step::Call(spec) => {
            debug_assert!(proc.pending.is_none(), "calls are sequential per processor");
            let id = proc.next_call;
            proc.next_call += 1;
            let spec: Arc<CallSpec> = Arc::new(spec);
            notes.push(Milestone::CallStart {
                p: p.0,
                call: id,
                kind: spec.kind(),
                array: spec.array,
            });
            for q in 0..n {
                out.push((
                    ProcessorId::from(q),
                    Payload::Request {
                        call: id,
                        spec: Arc::clone(&spec),
                    },
                ));
            }
            counters.calls[p.index()] += 1;
            counters.requests += n as u64;
            proc.pending = Some(PendingCall::new(id, spec, n, index));
        }
        Step::Done(outcome) => {
            proc.role = Role::Returned(outcome);
            *returned += 1;
            notes.push(Milestone::Respond { p: p.0, outcome });
            if let Outcome::Elect(e) = outcome {
                history.respond(p.index(), e.verdict);
            }
        }
    }
}
