//! The quorum `communicate` primitive.
//!
//! A call sends one request to each of the `n` processors (the caller
//! included) and completes once `⌊n/2⌋ + 1` distinct processors have
//! acknowledged. Every processor, participant or not, answers requests for
//! the whole run: a propagate joins the carried value into the responder's
//! view, a collect is answered with a snapshot of that view.

pub mod analysis;
mod views;

use std::collections::BTreeMap;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::ids::{ArrayId, ArrayKind};

pub use views::{ArrayView, Entry, EntryChange, Join, RoundTable, Stat, StatusArray, Update};

/// Number of acknowledgments a call waits for.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Propagate,
    Collect,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Propagate(Update),
    Collect,
}

/// What a protocol asks `communicate` to do.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CallSpec {
    pub array: ArrayId,
    pub op: Op,
}

impl CallSpec {
    pub fn propagate(array: ArrayId, update: Update) -> Self {
        CallSpec {
            array,
            op: Op::Propagate(update),
        }
    }

    pub fn collect(array: ArrayId) -> Self {
        CallSpec {
            array,
            op: Op::Collect,
        }
    }

    pub fn kind(&self) -> CallKind {
        match self.op {
            Op::Propagate(_) => CallKind::Propagate,
            Op::Collect => CallKind::Collect,
        }
    }
}

/// Message contents. Requests share their spec among the `n` copies.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    Request { call: u32, spec: Arc<CallSpec> },
    Ack { call: u32, view: Option<Arc<ArrayView>> },
}

impl Payload {
    pub fn call(&self) -> u32 {
        match self {
            Payload::Request { call, .. } | Payload::Ack { call, .. } => *call,
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, Payload::Request { .. })
    }
}

/// What a completed call hands back to the protocol.
#[derive(Clone, Debug)]
pub enum CallResult {
    Propagated,
    Collected(Vec<Arc<ArrayView>>),
}

impl CallResult {
    /// The collected views.
    ///
    /// # Panics
    /// If the call was a propagate.
    pub fn views(self) -> Vec<Arc<ArrayView>> {
        match self {
            CallResult::Collected(v) => v,
            CallResult::Propagated => panic!("propagate returns no views"),
        }
    }
}

/// A call waiting for its quorum.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PendingCall {
    pub id: u32,
    pub spec: Arc<CallSpec>,
    pub responders: FixedBitSet,
    acks: usize,
    pub views: Vec<Arc<ArrayView>>,
    pub started_at: u64,
}

impl PendingCall {
    pub fn new(id: u32, spec: Arc<CallSpec>, n: usize, started_at: u64) -> Self {
        PendingCall {
            id,
            spec,
            responders: FixedBitSet::with_capacity(n),
            acks: 0,
            views: Vec::new(),
            started_at,
        }
    }

    /// Counts an acknowledgment. A second ACK from the same responder is
    /// ignored and `false` is returned.
    pub fn on_ack(&mut self, from: usize, view: Option<Arc<ArrayView>>) -> bool {
        if self.responders.put(from) {
            return false;
        }
        self.acks += 1;
        if let Some(v) = view {
            self.views.push(v);
        }
        true
    }

    pub fn acks(&self) -> usize {
        self.acks
    }

    pub fn ready(&self, n: usize) -> bool {
        self.acks >= quorum(n)
    }

    pub fn finish(self) -> CallResult {
        match self.spec.op {
            Op::Propagate(_) => CallResult::Propagated,
            Op::Collect => CallResult::Collected(self.views),
        }
    }
}

/// Initial views, shared so that answering a collect for an array the
/// responder has never heard of costs nothing.
#[derive(Clone, Debug)]
pub struct Blanks {
    status: Arc<ArrayView>,
    door: Arc<ArrayView>,
    rounds: Arc<ArrayView>,
    flags: Arc<ArrayView>,
}

impl Blanks {
    pub fn new(n: usize) -> Self {
        Blanks {
            status: Arc::new(ArrayView::blank(ArrayKind::Status, n)),
            door: Arc::new(ArrayView::blank(ArrayKind::Door, n)),
            rounds: Arc::new(ArrayView::blank(ArrayKind::Round, n)),
            flags: Arc::new(ArrayView::blank(ArrayKind::Flags, n)),
        }
    }

    pub fn get(&self, kind: ArrayKind) -> &Arc<ArrayView> {
        match kind {
            ArrayKind::Status => &self.status,
            ArrayKind::Door => &self.door,
            ArrayKind::Round => &self.rounds,
            ArrayKind::Flags => &self.flags,
        }
    }
}

/// The views a processor holds as a responder. These change only when a
/// propagate request is processed; protocol-local variables live elsewhere.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Store {
    arrays: BTreeMap<ArrayId, Arc<ArrayView>>,
}

impl Store {
    pub fn get(&self, id: ArrayId) -> Option<&Arc<ArrayView>> {
        self.arrays.get(&id)
    }

    pub fn arrays(&self) -> impl Iterator<Item = (&ArrayId, &Arc<ArrayView>)> {
        self.arrays.iter()
    }

    pub fn snapshot(&self, id: ArrayId, blanks: &Blanks) -> Arc<ArrayView> {
        match self.arrays.get(&id) {
            Some(v) => Arc::clone(v),
            None => Arc::clone(blanks.get(id.kind())),
        }
    }

    pub fn join(
        &mut self,
        id: ArrayId,
        update: &Update,
        blanks: &Blanks,
        changes: Option<&mut Vec<EntryChange>>,
    ) -> Join {
        let slot = self
            .arrays
            .entry(id)
            .or_insert_with(|| Arc::clone(blanks.get(id.kind())));
        if slot.absorbs(update) {
            return Join::default();
        }
        Arc::make_mut(slot).apply(update, changes)
    }

    /// Answers a request: joins a propagated value, or snapshots the view
    /// for a collect. Returns the ACK's view and the join result.
    pub fn respond(
        &mut self,
        spec: &CallSpec,
        blanks: &Blanks,
        changes: Option<&mut Vec<EntryChange>>,
    ) -> (Option<Arc<ArrayView>>, Join) {
        match &spec.op {
            Op::Propagate(update) => (None, self.join(spec.array, update, blanks, changes)),
            Op::Collect => (Some(self.snapshot(spec.array, blanks)), Join::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ElectKey, SiftKey};

    #[test]
    fn quorum_sizes() {
        assert_eq!(quorum(1), 1);
        assert_eq!(quorum(2), 2);
        assert_eq!(quorum(3), 2);
        assert_eq!(quorum(5), 3);
        assert_eq!(quorum(1024), 513);
    }

    #[test]
    fn pending_call_completes_at_quorum_and_ignores_duplicates() {
        let spec = Arc::new(CallSpec::collect(ArrayId::Door(ElectKey::Solo)));
        let mut call = PendingCall::new(0, spec, 5, 0);
        let v = Arc::new(ArrayView::Door(false));
        assert!(call.on_ack(0, Some(v.clone())));
        assert!(call.on_ack(1, Some(v.clone())));
        assert!(!call.on_ack(1, Some(v.clone())));
        assert!(!call.ready(5));
        assert!(call.on_ack(4, Some(v)));
        assert!(call.ready(5));
        assert_eq!(call.finish().views().len(), 3);
    }

    #[test]
    fn collect_answers_blank_without_inserting() {
        let blanks = Blanks::new(3);
        let mut store = Store::default();
        let id = ArrayId::Status(SiftKey::SOLO);
        let (view, _) = store.respond(&CallSpec::collect(id), &blanks, None);
        assert_eq!(*view.unwrap(), ArrayView::blank(ArrayKind::Status, 3));
        assert!(store.get(id).is_none());
    }

    #[test]
    fn snapshot_is_isolated_from_later_joins() {
        let blanks = Blanks::new(3);
        let mut store = Store::default();
        let id = ArrayId::Contended;
        store.join(id, &Update::Flag(0), &blanks, None);
        let snap = store.snapshot(id, &blanks);
        store.join(id, &Update::Flag(2), &blanks, None);
        assert!(!snap.as_flags().unwrap().contains(2));
        assert!(store.get(id).unwrap().as_flags().unwrap().contains(2));
    }
}
