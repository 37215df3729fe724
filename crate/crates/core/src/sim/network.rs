//! In-flight envelopes and the set of processors with pending work.

use std::collections::VecDeque;

use crate::communicate::Payload;
use crate::ids::ProcessorId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub id: u64,
    pub src: ProcessorId,
    pub dst: ProcessorId,
    pub payload: Payload,
    pub sent_at: u64,
}

#[derive(Clone, Debug)]
struct Slot {
    env: Envelope,
    live_pos: u32,
}

/// Envelopes in flight, indexed by id. Ids are dense and increase in send
/// order, so the slab is a deque offset by the id of its first slot.
#[derive(Clone, Debug, Default)]
pub struct Network {
    base: u64,
    slab: VecDeque<Option<Slot>>,
    live: Vec<u64>,
    next_id: u64,
    /// Ids below this are delivered or were sent by a crashed processor.
    cursor: u64,
}

impl Network {
    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn send(&mut self, src: ProcessorId, dst: ProcessorId, payload: Payload, now: u64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.slab.push_back(Some(Slot {
            env: Envelope {
                id,
                src,
                dst,
                payload,
                sent_at: now,
            },
            live_pos: self.live.len() as u32,
        }));
        self.live.push(id);
        id
    }

    pub fn get(&self, id: u64) -> Option<&Envelope> {
        let i = id.checked_sub(self.base)? as usize;
        self.slab.get(i)?.as_ref().map(|s| &s.env)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.get(id).is_some()
    }

    pub fn take(&mut self, id: u64) -> Option<Envelope> {
        let i = id.checked_sub(self.base)? as usize;
        let slot = self.slab.get_mut(i)?.take()?;
        let pos = slot.live_pos as usize;
        self.live.swap_remove(pos);
        if let Some(&moved) = self.live.get(pos) {
            let j = (moved - self.base) as usize;
            if let Some(s) = self.slab[j].as_mut() {
                s.live_pos = pos as u32;
            }
        }
        while matches!(self.slab.front(), Some(None)) {
            self.slab.pop_front();
            self.base += 1;
        }
        self.cursor = self.cursor.max(self.base);
        Some(slot.env)
    }

    /// The `i`-th live envelope in an arbitrary but deterministic order.
    pub fn live_at(&self, i: usize) -> Option<u64> {
        self.live.get(i).copied()
    }

    /// Envelopes in id (send) order.
    pub fn iter(&self) -> impl Iterator<Item = &Envelope> {
        self.slab.iter().filter_map(|s| s.as_ref().map(|s| &s.env))
    }

    pub fn oldest(&self) -> Option<&Envelope> {
        self.slab.front().and_then(|s| s.as_ref().map(|s| &s.env))
    }

    /// Moves the obligation cursor past delivered envelopes and those whose
    /// sender has crashed.
    pub fn advance_cursor(&mut self, crashed: impl Fn(ProcessorId) -> bool) {
        self.cursor = self.cursor.max(self.base);
        while self.cursor < self.next_id {
            match &self.slab[(self.cursor - self.base) as usize] {
                Some(s) if !crashed(s.env.src) => break,
                _ => self.cursor += 1,
            }
        }
    }

    /// The oldest envelope whose delivery is owed, as of the last
    /// [`advance_cursor`](Self::advance_cursor).
    pub fn oldest_obligation(&self) -> Option<&Envelope> {
        self.get(self.cursor)
    }
}

/// Processors that have work to do: a non-empty mailbox or an invocation
/// not yet started.
#[derive(Clone, Debug)]
pub struct Ready {
    since: Vec<Option<u64>>,
    queue: VecDeque<(u64, u32)>,
    list: Vec<u32>,
    pos: Vec<u32>,
}

impl Ready {
    pub fn new(n: usize) -> Self {
        Ready {
            since: vec![None; n],
            queue: VecDeque::new(),
            list: Vec::new(),
            pos: vec![0; n],
        }
    }

    pub fn mark(&mut self, p: usize, now: u64) {
        if self.since[p].is_none() {
            self.since[p] = Some(now);
            self.queue.push_back((now, p as u32));
            self.pos[p] = self.list.len() as u32;
            self.list.push(p as u32);
        }
    }

    pub fn clear(&mut self, p: usize) {
        if self.since[p].take().is_some() {
            let i = self.pos[p] as usize;
            self.list.swap_remove(i);
            if let Some(&moved) = self.list.get(i) {
                self.pos[moved as usize] = i as u32;
            }
        }
    }

    pub fn since(&self, p: usize) -> Option<u64> {
        self.since[p]
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn at(&self, i: usize) -> Option<u32> {
        self.list.get(i).copied()
    }

    /// Drops stale queue entries; rebuilds the queue when they dominate.
    pub fn prune(&mut self) {
        while let Some(&(s, p)) = self.queue.front() {
            if self.since[p as usize] == Some(s) {
                break;
            }
            self.queue.pop_front();
        }
        if self.queue.len() > 4 * self.list.len() + 64 {
            let mut fresh: Vec<(u64, u32)> = self
                .list
                .iter()
                .map(|&p| (self.since[p as usize].expect("listed processor is ready"), p))
                .collect();
            fresh.sort_unstable();
            self.queue = fresh.into();
        }
    }

    /// The processor that has waited longest, ties broken by id, as of the
    /// last [`prune`](Self::prune).
    pub fn oldest(&self) -> Option<(u64, ProcessorId)> {
        self.queue.front().map(|&(s, p)| (s, ProcessorId(p)))
    }

    /// Ready processors in the order they became ready.
    pub fn iter_by_age(&self) -> impl Iterator<Item = (u64, ProcessorId)> + '_ {
        self.queue
            .iter()
            .filter(|&&(s, p)| self.since[p as usize] == Some(s))
            .map(|&(s, p)| (s, ProcessorId(p)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack() -> Payload {
        Payload::Ack { call: 0, view: None }
    }

    #[test]
    fn ids_increase_and_take_is_exactly_once() {
        let mut net = Network::default();
        let a = net.send(ProcessorId(0), ProcessorId(1), ack(), 0);
        let b = net.send(ProcessorId(1), ProcessorId(0), ack(), 0);
        assert!(a < b);
        assert_eq!(net.len(), 2);
        assert_eq!(net.take(a).unwrap().id, a);
        assert!(net.take(a).is_none());
        assert_eq!(net.oldest().unwrap().id, b);
        assert_eq!(net.live_at(0), Some(b));
    }

    #[test]
    fn cursor_skips_crashed_senders() {
        let mut net = Network::default();
        net.send(ProcessorId(2), ProcessorId(0), ack(), 0);
        let b = net.send(ProcessorId(1), ProcessorId(0), ack(), 1);
        net.advance_cursor(|p| p == ProcessorId(2));
        assert_eq!(net.oldest_obligation().unwrap().id, b);
    }

    #[test]
    fn ready_orders_by_age_then_id() {
        let mut r = Ready::new(4);
        r.mark(2, 0);
        r.mark(1, 0);
        r.mark(3, 5);
        r.clear(2);
        r.prune();
        assert_eq!(r.oldest(), Some((0, ProcessorId(1))));
        r.mark(2, 7);
        let ages: Vec<_> = r.iter_by_age().map(|(_, p)| p.0).collect();
        assert_eq!(ages, vec![1, 3, 2]);
    }
}
