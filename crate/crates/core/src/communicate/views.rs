//! Replicated views and the join rules applied when a propagate arrives.
//!
//! Every kind of variable forms a join semi-lattice: status entries climb
//! `Bottom < Commit < {LowPri, HighPri}`, booleans join by OR and round
//! numbers by max. A join never lowers a view; an update that would need to
//! (a priority flipping from low to high) is reported as a conflict and
//! leaves the view untouched.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::ids::ArrayKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Bottom,
    Commit,
    LowPri,
    HighPri,
}

impl Stat {
    pub fn is_priority(self) -> bool {
        matches!(self, Stat::LowPri | Stat::HighPri)
    }

    /// The lattice order. `LowPri` and `HighPri` are incomparable.
    pub fn leq(self, other: Stat) -> bool {
        match (self, other) {
            (a, b) if a == b => true,
            (Stat::Bottom, _) => true,
            (Stat::Commit, b) => b.is_priority(),
            _ => false,
        }
    }
}

/// Outcome of a join: whether the view grew, and whether the incoming value
/// was incomparable with what the view already held.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Join {
    pub changed: bool,
    pub conflict: bool,
}

impl Join {
    fn absorb(&mut self, other: Join) {
        self.changed |= other.changed;
        self.conflict |= other.conflict;
    }
}

/// One view of a `Status[n]` array.
///
/// `seen` holds every index that is not `Bottom`; `low` and `high` hold the
/// indices at each priority. The `.list` attached to a priority status is
/// immutable and identical in every view that shows it, so it is kept once
/// per instance (see [`crate::sifting::ListBook`]) rather than in each view.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StatusArray {
    seen: FixedBitSet,
    low: FixedBitSet,
    high: FixedBitSet,
}

impl StatusArray {
    pub fn new(n: usize) -> Self {
        StatusArray {
            seen: FixedBitSet::with_capacity(n),
            low: FixedBitSet::with_capacity(n),
            high: FixedBitSet::with_capacity(n),
        }
    }

    pub fn get(&self, j: usize) -> Stat {
        if self.low.contains(j) {
            Stat::LowPri
        } else if self.high.contains(j) {
            Stat::HighPri
        } else if self.seen.contains(j) {
            Stat::Commit
        } else {
            Stat::Bottom
        }
    }

    /// Indices whose status is not `Bottom`.
    pub fn seen(&self) -> &FixedBitSet {
        &self.seen
    }

    pub fn low(&self) -> &FixedBitSet {
        &self.low
    }

    pub fn high(&self) -> &FixedBitSet {
        &self.high
    }

    pub fn join_entry(&mut self, j: usize, stat: Stat) -> Join {
        let before = self.get(j);
        if stat.leq(before) {
            return Join::default();
        }
        if !before.leq(stat) {
            return Join {
                changed: false,
                conflict: true,
            };
        }
        self.seen.insert(j);
        match stat {
            Stat::LowPri => self.low.insert(j),
            Stat::HighPri => self.high.insert(j),
            _ => {}
        }
        Join {
            changed: true,
            conflict: false,
        }
    }

    pub fn join(&mut self, other: &StatusArray) -> Join {
        let mut out = Join::default();
        for j in other.seen.ones() {
            out.absorb(self.join_entry(j, other.get(j)));
        }
        out
    }

    pub fn leq(&self, other: &StatusArray) -> bool {
        self.seen.ones().all(|j| self.get(j).leq(other.get(j)))
    }
}

/// The value of a single array entry, as recorded in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Entry {
    Stat(Stat),
    Door(bool),
    Round(u32),
    Flag(bool),
}

impl Entry {
    pub fn leq(self, other: Entry) -> bool {
        match (self, other) {
            (Entry::Stat(a), Entry::Stat(b)) => a.leq(b),
            (Entry::Door(a), Entry::Door(b)) | (Entry::Flag(a), Entry::Flag(b)) => a <= b,
            (Entry::Round(a), Entry::Round(b)) => a <= b,
            _ => false,
        }
    }
}

/// A processor's view of one replicated array.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArrayView {
    Status(StatusArray),
    Door(bool),
    Rounds(RoundTable),
    Flags(FixedBitSet),
}

/// A view of `Round[n]`. Besides the entries it keeps the largest value and
/// the runner-up so that "largest round of anyone else" is O(1).
#[derive(Clone, Debug)]
pub struct RoundTable {
    values: Vec<u32>,
    top: u32,
    top_index: u32,
    second: u32,
}

impl RoundTable {
    pub fn new(n: usize) -> Self {
        RoundTable {
            values: vec![0; n],
            top: 0,
            top_index: 0,
            second: 0,
        }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, i: usize) -> u32 {
        self.values[i]
    }

    /// `max_{j ≠ i} values[j]`, or 0 when there is no other entry.
    pub fn max_excluding(&self, i: usize) -> u32 {
        if self.top_index as usize == i {
            self.second
        } else {
            self.top
        }
    }

    /// Raises entry `i` to `r`. Returns whether it changed.
    pub fn raise(&mut self, i: usize, r: u32) -> bool {
        if r <= self.values[i] {
            return false;
        }
        self.values[i] = r;
        if self.top_index as usize == i {
            self.top = r;
        } else if r > self.top {
            self.second = self.top;
            self.top = r;
            self.top_index = i as u32;
        } else if r > self.second {
            self.second = r;
        }
        true
    }
}

impl PartialEq for RoundTable {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl Eq for RoundTable {}

impl std::hash::Hash for RoundTable {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.values.hash(state);
    }
}

/// The value carried by a propagate request.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Update {
    Status {
        owner: u32,
        stat: Stat,
        /// The heterogeneous variant's participant list, attached to
        /// priority statuses only.
        list: Option<Arc<FixedBitSet>>,
    },
    Door,
    Round {
        owner: u32,
        round: u32,
    },
    /// Every index of a flag array known to be true.
    Flags(Arc<FixedBitSet>),
    /// A single flag entry set to true.
    Flag(u32),
}

/// A change to one entry of a view: `(index, before, after)`.
pub type EntryChange = (u32, Entry, Entry);

impl ArrayView {
    pub fn blank(kind: ArrayKind, n: usize) -> Self {
        match kind {
            ArrayKind::Status => ArrayView::Status(StatusArray::new(n)),
            ArrayKind::Door => ArrayView::Door(false),
            ArrayKind::Round => ArrayView::Rounds(RoundTable::new(n)),
            ArrayKind::Flags => ArrayView::Flags(FixedBitSet::with_capacity(n)),
        }
    }

    pub fn kind(&self) -> ArrayKind {
        match self {
            ArrayView::Status(_) => ArrayKind::Status,
            ArrayView::Door(_) => ArrayKind::Door,
            ArrayView::Rounds(_) => ArrayKind::Round,
            ArrayView::Flags(_) => ArrayKind::Flags,
        }
    }

    pub fn entry(&self, index: usize) -> Entry {
        match self {
            ArrayView::Status(s) => Entry::Stat(s.get(index)),
            ArrayView::Door(d) => Entry::Door(*d),
            ArrayView::Rounds(r) => Entry::Round(r.get(index)),
            ArrayView::Flags(f) => Entry::Flag(f.contains(index)),
        }
    }

    pub fn as_status(&self) -> Option<&StatusArray> {
        match self {
            ArrayView::Status(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_door(&self) -> Option<bool> {
        match self {
            ArrayView::Door(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_rounds(&self) -> Option<&RoundTable> {
        match self {
            ArrayView::Rounds(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_flags(&self) -> Option<&FixedBitSet> {
        match self {
            ArrayView::Flags(f) => Some(f),
            _ => None,
        }
    }

    /// Would applying `update` change this view?
    pub fn absorbs(&self, update: &Update) -> bool {
        match (self, update) {
            (ArrayView::Status(s), Update::Status { owner, stat, .. }) => {
                stat.leq(s.get(*owner as usize))
            }
            (ArrayView::Door(d), Update::Door) => *d,
            (ArrayView::Rounds(r), Update::Round { owner, round }) => r.get(*owner as usize) >= *round,
            (ArrayView::Flags(f), Update::Flags(set)) => set.is_subset(f),
            (ArrayView::Flags(f), Update::Flag(i)) => f.contains(*i as usize),
            _ => false,
        }
    }

    /// Joins `update` into the view. Entry-level changes are appended to
    /// `changes` when it is given.
    ///
    /// # Panics
    /// If the update's kind does not match the view's kind.
    pub fn apply(&mut self, update: &Update, mut changes: Option<&mut Vec<EntryChange>>) -> Join {
        match (self, update) {
            (ArrayView::Status(s), Update::Status { owner, stat, .. }) => {
                let before = s.get(*owner as usize);
                let out = s.join_entry(*owner as usize, *stat);
                if out.changed {
                    if let Some(c) = changes {
                        c.push((*owner, Entry::Stat(before), Entry::Stat(*stat)));
                    }
                }
                out
            }
            (ArrayView::Door(d), Update::Door) => {
                let changed = !*d;
                *d = true;
                if changed {
                    if let Some(c) = changes {
                        c.push((0, Entry::Door(false), Entry::Door(true)));
                    }
                }
                Join {
                    changed,
                    conflict: false,
                }
            }
            (ArrayView::Rounds(r), Update::Round { owner, round }) => {
                let before = r.get(*owner as usize);
                let changed = r.raise(*owner as usize, *round);
                if changed {
                    if let Some(c) = changes {
                        c.push((*owner, Entry::Round(before), Entry::Round(*round)));
                    }
                }
                Join {
                    changed,
                    conflict: false,
                }
            }
            (ArrayView::Flags(f), Update::Flags(set)) => {
                let mut changed = false;
                for i in set.ones() {
                    if !f.put(i) {
                        changed = true;
                        if let Some(c) = changes.as_deref_mut() {
                            c.push((i as u32, Entry::Flag(false), Entry::Flag(true)));
                        }
                    }
                }
                Join {
                    changed,
                    conflict: false,
                }
            }
            (ArrayView::Flags(f), Update::Flag(i)) => {
                let changed = !f.put(*i as usize);
                if changed {
                    if let Some(c) = changes {
                        c.push((*i, Entry::Flag(false), Entry::Flag(true)));
                    }
                }
                Join {
                    changed,
                    conflict: false,
                }
            }
            (view, update) => panic!("update {update:?} applied to {:?} view", view.kind()),
        }
    }

    /// Joins a whole view into this one.
    pub fn join(&mut self, other: &ArrayView) -> Join {
        match (self, other) {
            (ArrayView::Status(a), ArrayView::Status(b)) => a.join(b),
            (ArrayView::Door(a), ArrayView::Door(b)) => {
                let changed = *b && !*a;
                *a |= *b;
                Join {
                    changed,
                    conflict: false,
                }
            }
            (ArrayView::Rounds(a), ArrayView::Rounds(b)) => {
                let mut changed = false;
                for (i, &y) in b.values().iter().enumerate() {
                    changed |= a.raise(i, y);
                }
                Join {
                    changed,
                    conflict: false,
                }
            }
            (ArrayView::Flags(a), ArrayView::Flags(b)) => {
                let changed = !b.is_subset(a);
                a.union_with(b);
                Join {
                    changed,
                    conflict: false,
                }
            }
            (a, b) => panic!("cannot join {:?} with {:?}", a.kind(), b.kind()),
        }
    }

    /// The lattice order between two views of the same array.
    pub fn leq(&self, other: &ArrayView) -> bool {
        match (self, other) {
            (ArrayView::Status(a), ArrayView::Status(b)) => a.leq(b),
            (ArrayView::Door(a), ArrayView::Door(b)) => a <= b,
            (ArrayView::Rounds(a), ArrayView::Rounds(b)) => {
                a.values().iter().zip(b.values()).all(|(x, y)| x <= y)
            }
            (ArrayView::Flags(a), ArrayView::Flags(b)) => a.is_subset(b),
            _ => false,
        }
    }
}
