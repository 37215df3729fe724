//! Offline checks over renaming traces.
//!
//! Names are 1-based here; `Contended` views and `Pick` views index them
//! from 0. The quorum time of a name is the event at which more than half
//! of the processors first held `Contended[name] = true`.

use std::collections::{BTreeMap, BTreeSet};

use crate::communicate::Entry;
use crate::ids::ArrayId;
use crate::idset::IdSet;
use crate::protocol::Outcome;
use crate::sim::trace::{Milestone, Trace};

/// Names sorted by quorum time. Names that never reached a quorum come
/// next, contended ones first; ties go by name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NameOrder {
    /// `order[r]` is the name at rank `r`.
    pub order: Vec<u32>,
    /// Quorum time per name, indexed by `name - 1`.
    pub quorum_time: Vec<Option<u64>>,
    /// Rank per name, indexed by `name - 1`.
    pub rank: Vec<usize>,
}

impl NameOrder {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// `a ≺ b`.
    pub fn precedes(&self, a: u32, b: u32) -> bool {
        self.rank[a as usize - 1] < self.rank[b as usize - 1]
    }

    /// Number of groups: suffix `G_{≥j}` holds the last `⌈n / 2^{j−1}⌉`
    /// ranks, and the last group is a single name.
    pub fn groups(&self) -> u32 {
        let mut j = 1;
        while suffix(self.n(), j) > 1 {
            j += 1;
        }
        j
    }

    /// Ranks `lo..hi` of group `j`.
    pub fn group_ranks(&self, j: u32) -> std::ops::Range<usize> {
        let n = self.n();
        let hi = if j >= self.groups() { n } else { n - suffix(n, j + 1) };
        n - suffix(n, j)..hi
    }

    /// Group of the name at rank `r`, from 1.
    pub fn group_of_rank(&self, r: usize) -> u32 {
        let n = self.n();
        (1..=self.groups()).rev().find(|&j| r >= n - suffix(n, j)).unwrap_or(1)
    }

    pub fn group(&self, name: u32) -> u32 {
        self.group_of_rank(self.rank[name as usize - 1])
    }

    /// Event at which every name of group `j` had reached a quorum.
    pub fn phase_end(&self, j: u32) -> Option<u64> {
        self.order[self.group_ranks(j)]
            .iter()
            .map(|&u| self.quorum_time[u as usize - 1])
            .try_fold(0, |acc, t| t.map(|t| acc.max(t)))
    }

    /// Phase in effect at event `at`, from 1.
    pub fn phase_at(&self, at: u64) -> u32 {
        1 + (1..=self.groups())
            .take_while(|&j| self.phase_end(j).is_some_and(|e| e <= at))
            .count() as u32
    }
}

/// Size of the suffix `G_{≥j}`.
fn suffix(n: usize, j: u32) -> usize {
    n.div_ceil(1usize << (j - 1))
}

/// Derives the name order from the `Contended` view changes in the trace.
pub fn name_order(trace: &Trace) -> NameOrder {
    let n = trace.header.n;
    let quorum = n / 2 + 1;
    let mut count = vec![0usize; n];
    let mut quorum_time = vec![None; n];
    let mut contended = vec![false; n];
    for (at, m) in trace.milestones() {
        match m {
            Milestone::ViewChange {
                array: ArrayId::Contended,
                index,
                from: Entry::Flag(false),
                to: Entry::Flag(true),
                ..
            } => {
                let i = *index as usize;
                contended[i] = true;
                count[i] += 1;
                if count[i] == quorum && quorum_time[i].is_none() {
                    quorum_time[i] = Some(at);
                }
            }
            Milestone::Pick { name, .. } => contended[*name as usize - 1] = true,
            _ => {}
        }
    }
    let mut order: Vec<u32> = (1..=n as u32).collect();
    order.sort_by_key(|&u| {
        let i = u as usize - 1;
        (quorum_time[i].is_none(), quorum_time[i], !contended[i], u)
    });
    let mut rank = vec![0; n];
    for (r, &u) in order.iter().enumerate() {
        rank[u as usize - 1] = r;
    }
    NameOrder {
        order,
        quorum_time,
        rank,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationClass {
    Clean(u32),
    Dirty(u32),
    Cross(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationRecord {
    pub p: u32,
    pub iteration: u32,
    pub start: u64,
    /// Names contended in the pick-time view, 1-based.
    pub view: IdSet,
    pub name: u32,
    pub phase: u32,
    pub group: u32,
    /// The view shows a name from a group after the start phase.
    pub dirty: bool,
    pub class: IterationClass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct PickRecord {
    p: u32,
    iteration: u32,
    start: u64,
    /// 0-based name indices.
    view: IdSet,
    name: u32,
}

fn picks(trace: &Trace) -> Vec<PickRecord> {
    let mut starts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut out = Vec::new();
    for (at, m) in trace.milestones() {
        match m {
            Milestone::IterationStart { p, iteration } => {
                starts.insert((*p, *iteration), at);
            }
            Milestone::Pick {
                p,
                iteration,
                name,
                view,
            } => out.push(PickRecord {
                p: *p,
                iteration: *iteration,
                start: starts.get(&(*p, *iteration)).copied().unwrap_or(at),
                view: view.clone(),
                name: *name,
            }),
            _ => {}
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RenameViolation {
    #[error("p{p} and p{q} both returned name {name}")]
    DuplicateName { p: u32, q: u32, name: u32 },
    #[error("p{p} returned name {name} outside [1, {n}]")]
    OutOfRange { p: u32, name: u32, n: usize },
    #[error("p{p} contended for name {name} twice")]
    RepeatedPick { p: u32, name: u32 },
    #[error(
        "p{p} saw name {earlier} contended before iteration {iteration}, \
         then saw name {later} free, but {earlier} does not precede {later}"
    )]
    TemporalOrder {
        p: u32,
        iteration: u32,
        earlier: u32,
        later: u32,
    },
    #[error("{count} processors contended in groups {group} and later; the bound is {bound}")]
    GroupContention { group: u32, count: usize, bound: usize },
    #[error("p{p} iteration {iteration} started in phase {phase} but picked name {name} from group {group}")]
    StalePick {
        p: u32,
        iteration: u32,
        phase: u32,
        name: u32,
        group: u32,
    },
    #[error("p{p} ran {count} {kind}({group}) iterations")]
    TooManyIterations {
        p: u32,
        kind: &'static str,
        group: u32,
        count: usize,
    },
}

/// Returned names are distinct and in `[1, n]`.
pub fn check_names(trace: &Trace) -> Result<BTreeMap<u32, u32>, RenameViolation> {
    let n = trace.header.n;
    let mut by_name: BTreeMap<u32, u32> = BTreeMap::new();
    for (_, m) in trace.milestones() {
        if let Milestone::Respond {
            p,
            outcome: Outcome::Name(name),
        } = m
        {
            if *name == 0 || *name as usize > n {
                return Err(RenameViolation::OutOfRange { p: *p, name: *name, n });
            }
            if let Some(&q) = by_name.get(name) {
                return Err(RenameViolation::DuplicateName { p: q, q: *p, name: *name });
            }
            by_name.insert(*name, *p);
        }
    }
    Ok(by_name)
}

/// No processor contends for the same name twice.
pub fn check_no_repeat(trace: &Trace) -> Result<(), RenameViolation> {
    let mut seen = BTreeSet::new();
    for r in picks(trace) {
        if !seen.insert((r.p, r.name)) {
            return Err(RenameViolation::RepeatedPick { p: r.p, name: r.name });
        }
    }
    Ok(())
}

/// If `p` viewed `i` contended in some iteration and later viewed `j` free
/// at pick time, then `i ≺ j`.
pub fn check_temporal_order(trace: &Trace, order: &NameOrder) -> Result<(), RenameViolation> {
    let mut by_p: BTreeMap<u32, Vec<PickRecord>> = BTreeMap::new();
    for r in picks(trace) {
        by_p.entry(r.p).or_default().push(r);
    }
    for (p, mut iters) in by_p {
        iters.sort_by_key(|r| r.iteration);
        // Highest-ranked name seen contended in an earlier iteration.
        let mut earlier: Option<u32> = None;
        for r in &iters {
            if let Some(i) = earlier {
                let later = (0..order.n())
                    .filter(|&u| !r.view.contains(u))
                    .map(|u| u as u32 + 1)
                    .min_by_key(|&u| order.rank[u as usize - 1]);
                if let Some(j) = later {
                    if !order.precedes(i, j) {
                        return Err(RenameViolation::TemporalOrder {
                            p,
                            iteration: r.iteration,
                            earlier: i,
                            later: j,
                        });
                    }
                }
            }
            for u in r.view.iter().map(|u| u as u32 + 1).chain([r.name]) {
                if earlier.is_none_or(|e| order.precedes(e, u)) {
                    earlier = Some(u);
                }
            }
        }
    }
    Ok(())
}

/// Distinct processors contending in `G_{≥j}`, for `j = 1..`.
pub fn group_contention(trace: &Trace, order: &NameOrder) -> Vec<usize> {
    let groups = order.groups();
    let mut sets = vec![BTreeSet::new(); groups as usize];
    for r in picks(trace) {
        let g = order.group(r.name);
        for set in sets.iter_mut().take(g as usize) {
            set.insert(r.p);
        }
    }
    sets.into_iter().map(|s| s.len()).collect()
}

/// At most `⌈n / 2^{j−1}⌉` processors ever contend for names in `G_{≥j}`.
pub fn check_group_contention(trace: &Trace, order: &NameOrder) -> Result<Vec<usize>, RenameViolation> {
    let counts = group_contention(trace, order);
    for (i, &count) in counts.iter().enumerate() {
        let group = i as u32 + 1;
        let bound = suffix(order.n(), group);
        if count > bound {
            return Err(RenameViolation::GroupContention { group, count, bound });
        }
    }
    Ok(counts)
}

/// Labels every iteration that picked a name.
pub fn classify_iterations(trace: &Trace, order: &NameOrder) -> Result<Vec<IterationRecord>, RenameViolation> {
    let n = order.n();
    let mut out = Vec::new();
    for r in picks(trace) {
        let phase = order.phase_at(r.start);
        let group = order.group(r.name);
        if group < phase {
            return Err(RenameViolation::StalePick {
                p: r.p,
                iteration: r.iteration,
                phase,
                name: r.name,
                group,
            });
        }
        let dirty = r.view.iter().any(|u| order.group(u as u32 + 1) > phase);
        let class = if group > phase {
            IterationClass::Cross(group)
        } else if dirty {
            IterationClass::Dirty(phase)
        } else {
            IterationClass::Clean(phase)
        };
        out.push(IterationRecord {
            p: r.p,
            iteration: r.iteration,
            start: r.start,
            view: IdSet::from_ids(n + 1, r.view.iter().map(|u| u + 1)),
            name: r.name,
            phase,
            group,
            dirty,
            class,
        });
    }
    Ok(out)
}

/// Each processor runs at most one dirty iteration per start phase and at
/// most one cross iteration per group.
pub fn check_iteration_classes(records: &[IterationRecord]) -> Result<(), RenameViolation> {
    let mut dirty: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut cross: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for r in records {
        if r.dirty {
            *dirty.entry((r.p, r.phase)).or_default() += 1;
        }
        if let IterationClass::Cross(g) = r.class {
            *cross.entry((r.p, g)).or_default() += 1;
        }
    }
    for (kind, map) in [("dirty", dirty), ("cross", cross)] {
        if let Some((&(p, group), &count)) = map.iter().find(|(_, &c)| c > 1) {
            return Err(RenameViolation::TooManyIterations { p, kind, group, count });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenameSummary {
    pub names: BTreeMap<u32, u32>,
    pub iterations: usize,
    pub group_counts: Vec<usize>,
}

/// Every renaming check.
pub fn check_trace(trace: &Trace) -> Result<RenameSummary, RenameViolation> {
    let names = check_names(trace)?;
    check_no_repeat(trace)?;
    let order = name_order(trace);
    check_temporal_order(trace, &order)?;
    let group_counts = check_group_contention(trace, &order)?;
    let records = classify_iterations(trace, &order)?;
    check_iteration_classes(&records)?;
    Ok(RenameSummary {
        names,
        iterations: records.len(),
        group_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProtocolKind;
    use crate::sim::trace::{EventKind, TraceEvent, TraceHeader, TraceMode, SCHEMA};

    fn trace(n: usize, events: Vec<Vec<Milestone>>) -> Trace {
        let events: Vec<TraceEvent> = events
            .into_iter()
            .enumerate()
            .map(|(i, milestones)| TraceEvent {
                index: i as u64,
                kind: EventKind::Step,
                src: Some(0),
                dst: None,
                envelope: None,
                digest: 0,
                sent: None,
                tags: vec![],
                milestones,
            })
            .collect();
        Trace {
            header: TraceHeader {
                schema: SCHEMA.into(),
                n,
                t: 0,
                protocol: ProtocolKind::Rename,
                participants: (0..n as u32).collect(),
                seed: 0,
                mode: TraceMode::Milestones,
                note: None,
            },
            length: events.len() as u64,
            events,
            digest: 0,
        }
    }

    fn flag(at: u32, index: u32) -> Milestone {
        Milestone::ViewChange {
            at,
            array: ArrayId::Contended,
            index,
            from: Entry::Flag(false),
            to: Entry::Flag(true),
        }
    }

    fn pick(p: u32, iteration: u32, name: u32, view: &[usize], n: usize) -> Milestone {
        Milestone::Pick {
            p,
            iteration,
            name,
            view: IdSet::from_ids(n, view.iter().copied()),
        }
    }

    #[test]
    fn uncontended_names_keep_index_order() {
        let o = name_order(&trace(4, vec![]));
        assert_eq!(o.order, vec![1, 2, 3, 4]);
        assert!(o.quorum_time.iter().all(Option::is_none));
    }

    #[test]
    fn earlier_quorum_ranks_first() {
        // Name 5 reaches a quorum of 3 at event 2, name 2 at event 4.
        let t = trace(
            5,
            vec![
                vec![flag(0, 4), flag(1, 4)],
                vec![flag(0, 1)],
                vec![flag(2, 4)],
                vec![flag(1, 1)],
                vec![flag(2, 1)],
                vec![pick(3, 1, 3, &[], 5)],
            ],
        );
        let o = name_order(&t);
        assert_eq!(o.quorum_time[4], Some(2));
        assert_eq!(o.quorum_time[1], Some(4));
        assert!(o.precedes(5, 2));
        // Contended without a quorum sorts before never contended.
        assert_eq!(o.order, vec![5, 2, 3, 1, 4]);
    }

    #[test]
    fn groups_halve() {
        let o = name_order(&trace(16, vec![]));
        let groups: Vec<u32> = (0..16).map(|r| o.group_of_rank(r)).collect();
        assert_eq!(groups, [1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 5]);
        assert_eq!(o.groups(), 5);
        let o = name_order(&trace(1, vec![]));
        assert_eq!(o.groups(), 1);
        let o = name_order(&trace(5, vec![]));
        let groups: Vec<u32> = (0..5).map(|r| o.group_of_rank(r)).collect();
        assert_eq!(groups, [1, 1, 2, 3, 4]);
    }

    #[test]
    fn temporal_order_catches_a_swapped_view() {
        let n = 3;
        let quorum = |i| vec![flag(0, i), flag(1, i)];
        let mut events = vec![quorum(0), quorum(1)];
        // p2 first sees name 2 contended, then later sees only name 1.
        events.push(vec![pick(2, 1, 3, &[1], n)]);
        events.push(vec![pick(2, 2, 2, &[0], n)]);
        let t = trace(n, events);
        let o = name_order(&t);
        assert!(matches!(
            check_temporal_order(&t, &o),
            Err(RenameViolation::TemporalOrder { p: 2, .. })
        ));
        let t = trace(n, vec![quorum(0), quorum(1), vec![pick(2, 1, 3, &[0, 1], n)]]);
        assert_eq!(check_temporal_order(&t, &name_order(&t)), Ok(()));
    }

    #[test]
    fn duplicate_names_are_reported() {
        let respond = |p, name| Milestone::Respond {
            p,
            outcome: Outcome::Name(name),
        };
        let t = trace(3, vec![vec![respond(0, 2)], vec![respond(1, 2)]]);
        assert!(matches!(check_names(&t), Err(RenameViolation::DuplicateName { name: 2, .. })));
        let t = trace(3, vec![vec![respond(0, 4)]]);
        assert!(matches!(check_names(&t), Err(RenameViolation::OutOfRange { .. })));
    }
}
