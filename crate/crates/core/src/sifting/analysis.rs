//! Checks over the sifting milestones of a trace.
//!
//! Instances are keyed by [`SiftKey`]. For a stand-alone sifting run the
//! participants are the invoked processors; inside an election they are the
//! processors that entered the instance's round.

use std::collections::BTreeMap;

use crate::ids::SiftKey;
use crate::idset::IdSet;
use crate::protocol::ProtocolKind;
use crate::sim::trace::{Milestone, Trace};

use super::SiftVerdict;

/// Which die rule produced the instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Basic,
    Hetero,
    Naive,
}

impl Variant {
    /// The sifting variant run by `protocol`; elections and renaming use the
    /// heterogeneous one.
    pub fn of(protocol: ProtocolKind) -> Variant {
        match protocol {
            ProtocolKind::SiftBasic => Variant::Basic,
            ProtocolKind::SiftNaive => Variant::Naive,
            _ => Variant::Hetero,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlipRecord {
    pub at: u64,
    pub coin: u32,
    pub bias: f64,
    pub list: Option<IdSet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRecord {
    pub at: u64,
    pub verdict: SiftVerdict,
    pub flip: Option<u32>,
    pub l_set: Option<IdSet>,
}

/// Everything the trace says about one sifting instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SiftInstance {
    pub started: BTreeMap<u32, u64>,
    pub committed: BTreeMap<u32, u64>,
    pub flips: BTreeMap<u32, FlipRecord>,
    pub verdicts: BTreeMap<u32, VerdictRecord>,
}

impl SiftInstance {
    pub fn all_returned(&self) -> bool {
        !self.started.is_empty() && self.started.keys().all(|p| self.verdicts.contains_key(p))
    }

    pub fn survivors(&self) -> usize {
        self.verdicts
            .values()
            .filter(|v| v.verdict == SiftVerdict::Survive)
            .count()
    }

    pub fn ones(&self) -> usize {
        self.flips.values().filter(|f| f.coin == 1).count()
    }

    pub fn zero_survivors(&self) -> usize {
        self.verdicts
            .values()
            .filter(|v| v.verdict == SiftVerdict::Survive && v.flip == Some(0))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SiftViolation {
    #[error("{key:?}: every participant returned and none survived")]
    NoSurvivor { key: SiftKey },
    #[error("{key:?}: p{p} died with flip {flip:?}")]
    HighPriorityDied { key: SiftKey, p: u32, flip: Option<u32> },
    #[error("{key:?}: p{member} is in the closure but {reason}")]
    Closure { key: SiftKey, member: u32, reason: String },
    #[error("{key:?}: p{q} committed by event {q_at} but is missing from the list of p{p} (committed at {p_at})")]
    CommitOrder {
        key: SiftKey,
        q: u32,
        q_at: u64,
        p: u32,
        p_at: u64,
    },
    #[error("{key:?}: p{p} flipped 0 at event {at}, after the first 1 at event {first_one}, and survived")]
    LateZeroSurvived { key: SiftKey, p: u32, at: u64, first_one: u64 },
}

/// Groups the trace's sifting milestones by instance.
pub fn instances(trace: &Trace) -> BTreeMap<SiftKey, SiftInstance> {
    let standalone = trace.header.protocol.is_sift();
    let mut out: BTreeMap<SiftKey, SiftInstance> = BTreeMap::new();
    for (at, m) in trace.milestones() {
        match m {
            Milestone::Invoke { p, .. } if standalone => {
                out.entry(SiftKey::SOLO).or_default().started.insert(*p, at);
            }
            Milestone::RoundEntered { p, key, round } => {
                out.entry(SiftKey::in_round(*key, *round))
                    .or_default()
                    .started
                    .insert(*p, at);
            }
            Milestone::CommitPropagated { p, key } => {
                out.entry(*key).or_default().committed.insert(*p, at);
            }
            Milestone::Flip {
                p,
                key,
                bias,
                coin,
                list,
            } => {
                out.entry(*key).or_default().flips.insert(
                    *p,
                    FlipRecord {
                        at,
                        coin: *coin,
                        bias: *bias,
                        list: list.clone(),
                    },
                );
            }
            Milestone::SiftVerdict {
                p,
                key,
                verdict,
                flip,
                l_set,
            } => {
                out.entry(*key).or_default().verdicts.insert(
                    *p,
                    VerdictRecord {
                        at,
                        verdict: *verdict,
                        flip: *flip,
                        l_set: l_set.clone(),
                    },
                );
            }
            _ => {}
        }
    }
    out
}

/// At least one survivor whenever every participant returned.
pub fn check_survivor(key: SiftKey, inst: &SiftInstance) -> Result<(), SiftViolation> {
    if inst.all_returned() && inst.survivors() == 0 {
        return Err(SiftViolation::NoSurvivor { key });
    }
    Ok(())
}

/// DIE only after flipping 0.
pub fn check_high_priority(key: SiftKey, inst: &SiftInstance) -> Result<(), SiftViolation> {
    for (&p, v) in &inst.verdicts {
        if v.verdict == SiftVerdict::Die && v.flip != Some(0) {
            return Err(SiftViolation::HighPriorityDied { key, p, flip: v.flip });
        }
    }
    Ok(())
}

/// The union `U` of the `L` sets of flip-0 survivors is closed under the
/// recorded `ℓ` lists, and everyone in it flipped 0.
pub fn check_closure(key: SiftKey, inst: &SiftInstance) -> Result<(), SiftViolation> {
    let mut u: Option<fixedbitset::FixedBitSet> = None;
    for v in inst.verdicts.values() {
        if v.verdict != SiftVerdict::Survive || v.flip != Some(0) {
            continue;
        }
        let Some(l) = &v.l_set else { continue };
        match &mut u {
            Some(acc) => acc.union_with(l.bits()),
            None => u = Some(l.bits().clone()),
        }
    }
    let Some(u) = u else { return Ok(()) };
    for member in u.ones() {
        let member = member as u32;
        let Some(f) = inst.flips.get(&member) else {
            return Err(SiftViolation::Closure {
                key,
                member,
                reason: "never flipped".into(),
            });
        };
        if f.coin != 0 {
            return Err(SiftViolation::Closure {
                key,
                member,
                reason: "flipped 1".into(),
            });
        }
        if let Some(list) = &f.list {
            if let Some(q) = list.iter().find(|&q| !u.contains(q)) {
                return Err(SiftViolation::Closure {
                    key,
                    member,
                    reason: format!("its list holds p{q} outside the closure"),
                });
            }
        }
    }
    Ok(())
}

/// Heterogeneous: whoever finished its commit propagate no later than `p`
/// is on `p`'s list. Basic: once someone has flipped 1, every later flip-0
/// processor dies.
pub fn check_commit_order(key: SiftKey, inst: &SiftInstance, variant: Variant) -> Result<(), SiftViolation> {
    match variant {
        Variant::Hetero => {
            let mut order: Vec<(u64, u32)> = inst.committed.iter().map(|(&p, &at)| (at, p)).collect();
            order.sort_unstable();
            for (i, &(p_at, p)) in order.iter().enumerate() {
                let Some(list) = inst.flips.get(&p).and_then(|f| f.list.as_ref()) else {
                    continue;
                };
                for &(q_at, q) in &order[..i] {
                    if !list.contains(q as usize) {
                        return Err(SiftViolation::CommitOrder { key, q, q_at, p, p_at });
                    }
                }
            }
            Ok(())
        }
        Variant::Basic => {
            let Some(first_one) = inst.flips.values().filter(|f| f.coin == 1).map(|f| f.at).min() else {
                return Ok(());
            };
            for (&p, f) in &inst.flips {
                if f.coin != 0 || f.at < first_one {
                    continue;
                }
                if let Some(v) = inst.verdicts.get(&p) {
                    if v.verdict == SiftVerdict::Survive {
                        return Err(SiftViolation::LateZeroSurvived {
                            key,
                            p,
                            at: f.at,
                            first_one,
                        });
                    }
                }
            }
            Ok(())
        }
        Variant::Naive => Ok(()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiftSummary {
    pub instances: usize,
    pub complete: usize,
}

/// Runs every sifting check on every instance in the trace.
pub fn check_trace(trace: &Trace) -> Result<SiftSummary, SiftViolation> {
    let variant = Variant::of(trace.header.protocol);
    let all = instances(trace);
    let mut summary = SiftSummary::default();
    for (&key, inst) in &all {
        summary.instances += 1;
        if inst.all_returned() {
            summary.complete += 1;
        }
        check_survivor(key, inst)?;
        check_high_priority(key, inst)?;
        if variant == Variant::Hetero {
            check_closure(key, inst)?;
        }
        check_commit_order(key, inst, variant)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flip(at: u64, coin: u32, list: Option<&[u32]>) -> FlipRecord {
        FlipRecord {
            at,
            coin,
            bias: 0.5,
            list: list.map(|l| IdSet::from_ids(4, l.iter().map(|&p| p as usize))),
        }
    }

    fn verdict(at: u64, v: SiftVerdict, flip: u32, l: Option<&[u32]>) -> VerdictRecord {
        VerdictRecord {
            at,
            verdict: v,
            flip: Some(flip),
            l_set: l.map(|l| IdSet::from_ids(4, l.iter().map(|&p| p as usize))),
        }
    }

    #[test]
    fn closure_rejects_a_listed_outsider() {
        let mut inst = SiftInstance::default();
        inst.flips.insert(0, flip(1, 0, Some(&[0, 1])));
        inst.flips.insert(1, flip(2, 0, Some(&[1, 2])));
        inst.flips.insert(2, flip(3, 1, Some(&[2])));
        inst.verdicts.insert(0, verdict(5, SiftVerdict::Survive, 0, Some(&[0, 1])));
        let err = check_closure(SiftKey::SOLO, &inst).unwrap_err();
        assert!(matches!(err, SiftViolation::Closure { member: 1, .. }));
    }

    #[test]
    fn empty_survivor_set_is_vacuous() {
        let mut inst = SiftInstance::default();
        inst.flips.insert(0, flip(1, 1, Some(&[0])));
        inst.verdicts.insert(0, verdict(5, SiftVerdict::Survive, 1, None));
        assert_eq!(check_closure(SiftKey::SOLO, &inst), Ok(()));
    }

    #[test]
    fn commit_order_needs_earlier_committers_listed() {
        let mut inst = SiftInstance::default();
        inst.committed.insert(0, 3);
        inst.committed.insert(1, 7);
        inst.flips.insert(1, flip(8, 0, Some(&[1])));
        assert!(matches!(
            check_commit_order(SiftKey::SOLO, &inst, Variant::Hetero),
            Err(SiftViolation::CommitOrder { q: 0, p: 1, .. })
        ));
        inst.flips.insert(1, flip(8, 0, Some(&[0, 1])));
        assert_eq!(check_commit_order(SiftKey::SOLO, &inst, Variant::Hetero), Ok(()));
    }

    #[test]
    fn basic_zero_after_first_one_must_die() {
        let mut inst = SiftInstance::default();
        inst.flips.insert(0, flip(2, 1, None));
        inst.flips.insert(1, flip(1, 0, None));
        inst.flips.insert(2, flip(4, 0, None));
        inst.verdicts.insert(1, verdict(9, SiftVerdict::Survive, 0, None));
        inst.verdicts.insert(2, verdict(9, SiftVerdict::Survive, 0, None));
        assert!(matches!(
            check_commit_order(SiftKey::SOLO, &inst, Variant::Basic),
            Err(SiftViolation::LateZeroSurvived { p: 2, .. })
        ));
    }
}
