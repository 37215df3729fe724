//! Sifting state machines: the basic and heterogeneous PoisonPill and the
//! naive coin-first strawman.

use std::collections::BTreeMap;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::communicate::{ArrayView, CallResult, CallSpec, Stat, Update};
use crate::ids::{ArrayId, SiftKey};
use crate::idset::IdSet;
use crate::protocol::{Ctx, Fault, Step, StepResult};
use crate::sim::coins::Draw;
use crate::sim::trace::Milestone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiftVerdict {
    Survive,
    Die,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiftOutcome {
    pub verdict: SiftVerdict,
    pub flip: Option<u32>,
    /// `|ℓ|` at flip time (heterogeneous variant only).
    pub list_size: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("bias is undefined for an empty participant list")]
pub struct EmptyListError;

/// Probability of flipping 1 given `l = |ℓ|` participants seen.
pub fn bias(l: usize) -> Result<f64, EmptyListError> {
    match l {
        0 => Err(EmptyListError),
        1 => Ok(1.0),
        l => Ok((l as f64).ln() / l as f64),
    }
}

/// The `1/√n` bias of the basic and naive variants.
pub fn sqrt_bias(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Participant lists attached to priority statuses, per sifting instance.
///
/// A processor attaches its `ℓ` once and never changes it, so every view
/// that shows `j` at a priority status carries the same list. Views record
/// only the status; the list is read from here.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ListBook {
    lists: BTreeMap<SiftKey, Vec<Option<Arc<FixedBitSet>>>>,
}

impl ListBook {
    pub fn publish(&mut self, key: SiftKey, n: usize, owner: usize, list: Arc<FixedBitSet>) {
        let slot = &mut self.lists.entry(key).or_insert_with(|| vec![None; n])[owner];
        debug_assert!(slot.as_ref().is_none_or(|l| **l == *list));
        *slot = Some(list);
    }

    pub fn get(&self, key: SiftKey, owner: usize) -> Option<&Arc<FixedBitSet>> {
        self.lists.get(&key)?.get(owner)?.as_ref()
    }
}

fn status_array(key: SiftKey) -> ArrayId {
    ArrayId::Status(key)
}

fn propagate_status(key: SiftKey, owner: u32, stat: Stat, list: Option<Arc<FixedBitSet>>) -> CallSpec {
    CallSpec::propagate(status_array(key), Update::Status { owner, stat, list })
}

/// Unions of `seen`, `low` and `high` over a set of collected views.
struct Unions {
    seen: FixedBitSet,
    low: FixedBitSet,
    high: FixedBitSet,
}

fn unions(n: usize, views: &[Arc<ArrayView>]) -> Unions {
    let mut u = Unions {
        seen: FixedBitSet::with_capacity(n),
        low: FixedBitSet::with_capacity(n),
        high: FixedBitSet::with_capacity(n),
    };
    for v in views {
        let s = v.as_status().expect("status collect returned a non-status view");
        u.seen.union_with(s.seen());
        u.low.union_with(s.low());
        u.high.union_with(s.high());
    }
    u
}

fn priority(coin: u32) -> Stat {
    if coin == 1 {
        Stat::HighPri
    } else {
        Stat::LowPri
    }
}

fn views_of(p: u32, result: CallResult) -> Result<Vec<Arc<ArrayView>>, Fault> {
    match result {
        CallResult::Collected(v) => Ok(v),
        CallResult::Propagated => Err(Fault::UnexpectedResult { p }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum BasicStage {
    Commit,
    Priority,
    Collect,
    Done,
}

/// The basic PoisonPill: commit, flip with bias `1/√n`, announce the
/// priority, collect, and die if low priority while some processor is seen
/// committed or high with no view reporting it low.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasicPill {
    key: SiftKey,
    stage: BasicStage,
    flip: Option<u32>,
}

impl BasicPill {
    pub fn new(key: SiftKey) -> Self {
        BasicPill {
            key,
            stage: BasicStage::Commit,
            flip: None,
        }
    }

    pub fn flip(&self) -> Option<u32> {
        self.flip
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> Step<SiftOutcome> {
        self.stage = BasicStage::Commit;
        Step::Call(propagate_status(self.key, cx.p(), Stat::Commit, None))
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<SiftOutcome> {
        let p = cx.p();
        match self.stage {
            BasicStage::Commit => {
                cx.note(Milestone::CommitPropagated { p, key: self.key });
                let bias = sqrt_bias(cx.n);
                let coin = cx.draw(Draw::Coin { bias });
                self.flip = Some(coin);
                cx.note(Milestone::Flip {
                    p,
                    key: self.key,
                    bias,
                    coin,
                    list: None,
                });
                self.stage = BasicStage::Priority;
                Ok(Step::Call(propagate_status(self.key, p, priority(coin), None)))
            }
            BasicStage::Priority => {
                cx.note(Milestone::PriorityPropagated { p, key: self.key });
                self.stage = BasicStage::Collect;
                Ok(Step::Call(CallSpec::collect(status_array(self.key))))
            }
            BasicStage::Collect => {
                let views = views_of(p, result)?;
                let u = unions(cx.n, &views);
                // Some j is committed or high in a view and low in none.
                let die = self.flip == Some(0) && u.seen.difference_count(&u.low) > 0;
                self.stage = BasicStage::Done;
                Ok(Step::Done(finish(cx, self.key, die, self.flip, None, None)))
            }
            BasicStage::Done => Err(Fault::UnexpectedResult { p }),
        }
    }
}

fn finish(
    cx: &mut Ctx<'_>,
    key: SiftKey,
    die: bool,
    flip: Option<u32>,
    list_size: Option<u32>,
    l_set: Option<IdSet>,
) -> SiftOutcome {
    let verdict = if die {
        SiftVerdict::Die
    } else {
        SiftVerdict::Survive
    };
    cx.note(Milestone::SiftVerdict {
        p: cx.p(),
        key,
        verdict,
        flip,
        l_set: if die { None } else { l_set },
    });
    SiftOutcome {
        verdict,
        flip,
        list_size,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum HeteroStage {
    Commit,
    Participants,
    Priority,
    Collect,
    Done,
}

/// The heterogeneous PoisonPill, whose bias adapts to the number of
/// participants observed before flipping.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeteroPill {
    key: SiftKey,
    stage: HeteroStage,
    flip: Option<u32>,
    list: Option<Arc<FixedBitSet>>,
}

impl HeteroPill {
    pub fn new(key: SiftKey) -> Self {
        HeteroPill {
            key,
            stage: HeteroStage::Commit,
            flip: None,
            list: None,
        }
    }

    pub fn key(&self) -> SiftKey {
        self.key
    }

    pub fn flip(&self) -> Option<u32> {
        self.flip
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> Step<SiftOutcome> {
        self.stage = HeteroStage::Commit;
        Step::Call(propagate_status(self.key, cx.p(), Stat::Commit, None))
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<SiftOutcome> {
        let p = cx.p();
        match self.stage {
            HeteroStage::Commit => {
                cx.note(Milestone::CommitPropagated { p, key: self.key });
                self.stage = HeteroStage::Participants;
                Ok(Step::Call(CallSpec::collect(status_array(self.key))))
            }
            HeteroStage::Participants => {
                let views = views_of(p, result)?;
                let list = Arc::new(unions(cx.n, &views).seen);
                let size = list.count_ones(..);
                let bias = bias(size).map_err(|_| Fault::EmptyList { p })?;
                let coin = cx.draw(Draw::Coin { bias });
                self.flip = Some(coin);
                cx.note(Milestone::Flip {
                    p,
                    key: self.key,
                    bias,
                    coin,
                    list: Some(IdSet::from_arc(Arc::clone(&list))),
                });
                cx.lists.publish(self.key, cx.n, p as usize, Arc::clone(&list));
                self.list = Some(Arc::clone(&list));
                self.stage = HeteroStage::Priority;
                Ok(Step::Call(propagate_status(self.key, p, priority(coin), Some(list))))
            }
            HeteroStage::Priority => {
                cx.note(Milestone::PriorityPropagated { p, key: self.key });
                self.stage = HeteroStage::Collect;
                Ok(Step::Call(CallSpec::collect(status_array(self.key))))
            }
            HeteroStage::Collect => {
                let views = views_of(p, result)?;
                self.stage = HeteroStage::Done;
                let list_size = self.list.as_ref().map(|l| l.count_ones(..) as u32);
                if self.flip != Some(0) {
                    return Ok(Step::Done(finish(cx, self.key, false, self.flip, list_size, None)));
                }
                let u = unions(cx.n, &views);
                // L: every participant seen non-⊥, plus the lists attached to
                // every priority status seen.
                let mut l_set = u.seen;
                let mut pri = u.high;
                pri.union_with(&u.low);
                for j in pri.ones() {
                    if let Some(list) = cx.lists.get(self.key, j) {
                        l_set.union_with(list);
                    }
                }
                let die = l_set.difference_count(&u.low) > 0;
                let l_set = IdSet::new(l_set);
                Ok(Step::Done(finish(
                    cx,
                    self.key,
                    die,
                    self.flip,
                    list_size,
                    Some(l_set),
                )))
            }
            HeteroStage::Done => Err(Fault::UnexpectedResult { p }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum NaiveStage {
    Announce,
    Collect,
    Done,
}

/// Flip first, announce the flip, and give up on seeing anyone who flipped
/// 1. Kept as the baseline a coin-aware adversary defeats.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NaiveSift {
    key: SiftKey,
    stage: NaiveStage,
    flip: Option<u32>,
}

impl NaiveSift {
    pub fn new(key: SiftKey) -> Self {
        NaiveSift {
            key,
            stage: NaiveStage::Announce,
            flip: None,
        }
    }

    pub fn flip(&self) -> Option<u32> {
        self.flip
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> Step<SiftOutcome> {
        let p = cx.p();
        let bias = sqrt_bias(cx.n);
        let coin = cx.draw(Draw::Coin { bias });
        self.flip = Some(coin);
        cx.note(Milestone::Flip {
            p,
            key: self.key,
            bias,
            coin,
            list: None,
        });
        self.stage = NaiveStage::Announce;
        Step::Call(propagate_status(self.key, p, priority(coin), None))
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<SiftOutcome> {
        let p = cx.p();
        match self.stage {
            NaiveStage::Announce => {
                cx.note(Milestone::PriorityPropagated { p, key: self.key });
                self.stage = NaiveStage::Collect;
                Ok(Step::Call(CallSpec::collect(status_array(self.key))))
            }
            NaiveStage::Collect => {
                let views = views_of(p, result)?;
                let u = unions(cx.n, &views);
                let die = self.flip == Some(0) && !u.high.is_clear();
                self.stage = NaiveStage::Done;
                Ok(Step::Done(finish(cx, self.key, die, self.flip, None, None)))
            }
            NaiveStage::Done => Err(Fault::UnexpectedResult { p }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::communicate::StatusArray;
    use crate::ids::ProcessorId;
    use crate::sim::coins::{Coins, Script};

    struct Harness {
        coins: Coins,
        lists: ListBook,
        notes: Vec<Milestone>,
    }

    impl Harness {
        fn new(script: Vec<u32>) -> Self {
            Harness {
                coins: Coins::Scripted(Script {
                    values: script,
                    ..Script::default()
                }),
                lists: ListBook::default(),
                notes: Vec::new(),
            }
        }

        fn cx(&mut self, me: u32, n: usize) -> Ctx<'_> {
            Ctx {
                me: ProcessorId(me),
                n,
                event: 0,
                coins: &mut self.coins,
                lists: &mut self.lists,
                notes: &mut self.notes,
            }
        }
    }

    fn view(n: usize, entries: &[(usize, Stat)]) -> Arc<ArrayView> {
        let mut s = StatusArray::new(n);
        for &(j, st) in entries {
            s.join_entry(j, st);
        }
        Arc::new(ArrayView::Status(s))
    }

    fn run_basic(coin: u32, views: Vec<Arc<ArrayView>>) -> SiftOutcome {
        let mut h = Harness::new(vec![coin]);
        let mut pill = BasicPill::new(SiftKey::SOLO);
        let mut cx = h.cx(0, 4);
        pill.start(&mut cx);
        pill.resume(&mut cx, CallResult::Propagated).unwrap();
        pill.resume(&mut cx, CallResult::Propagated).unwrap();
        match pill.resume(&mut cx, CallResult::Collected(views)).unwrap() {
            Step::Done(o) => o,
            Step::Call(c) => panic!("unexpected call {c:?}"),
        }
    }

    #[test]
    fn bias_values() {
        assert_eq!(bias(1), Ok(1.0));
        assert!((bias(2).unwrap() - 0.346_573_590_279_972_6).abs() < 1e-12);
        assert!((bias(8).unwrap() - 0.259_930_192_709_979_5).abs() < 1e-12);
        assert_eq!(bias(0), Err(EmptyListError));
    }

    #[test]
    fn high_priority_survives_regardless_of_views() {
        let o = run_basic(1, vec![view(4, &[(0, Stat::HighPri), (1, Stat::Commit)])]);
        assert_eq!(o.verdict, SiftVerdict::Survive);
        assert_eq!(o.flip, Some(1));
    }

    #[test]
    fn all_low_survive() {
        let v = view(4, &[(0, Stat::LowPri), (1, Stat::LowPri), (2, Stat::LowPri)]);
        let o = run_basic(0, vec![v.clone(), v]);
        assert_eq!(o.verdict, SiftVerdict::Survive);
    }

    #[test]
    fn low_dies_on_unreported_commit() {
        let o = run_basic(
            0,
            vec![
                view(4, &[(0, Stat::LowPri), (1, Stat::Commit)]),
                view(4, &[(0, Stat::LowPri)]),
            ],
        );
        assert_eq!(o.verdict, SiftVerdict::Die);
    }

    #[test]
    fn commit_covered_by_another_views_low_is_harmless() {
        let o = run_basic(
            0,
            vec![
                view(4, &[(0, Stat::LowPri), (1, Stat::Commit)]),
                view(4, &[(0, Stat::LowPri), (1, Stat::LowPri)]),
            ],
        );
        assert_eq!(o.verdict, SiftVerdict::Survive);
    }

    #[test]
    fn hetero_sole_participant_flips_one() {
        let mut h = Harness::new(vec![]);
        let mut pill = HeteroPill::new(SiftKey::SOLO);
        let mut cx = h.cx(0, 1);
        pill.start(&mut cx);
        pill.resume(&mut cx, CallResult::Propagated).unwrap();
        let step = pill
            .resume(&mut cx, CallResult::Collected(vec![view(1, &[(0, Stat::Commit)])]))
            .unwrap();
        assert!(matches!(step, Step::Call(_)));
        assert_eq!(pill.flip(), Some(1));
    }

    #[test]
    fn hetero_dies_on_listed_but_unreported_participant() {
        // p0 is low; q=1 is low with list {1, 2}; r=2 is never seen low.
        let n = 3;
        let mut h = Harness::new(vec![0]);
        h.lists
            .publish(SiftKey::SOLO, n, 1, Arc::new(IdSet::from_ids(n, [1, 2]).bits().clone()));
        let mut pill = HeteroPill::new(SiftKey::SOLO);
        let mut cx = h.cx(0, n);
        pill.start(&mut cx);
        pill.resume(&mut cx, CallResult::Propagated).unwrap();
        pill.resume(
            &mut cx,
            CallResult::Collected(vec![view(n, &[(0, Stat::Commit), (1, Stat::Commit)])]),
        )
        .unwrap();
        pill.resume(&mut cx, CallResult::Propagated).unwrap();
        let views = vec![
            view(n, &[(0, Stat::LowPri), (1, Stat::LowPri)]),
            view(n, &[(0, Stat::LowPri)]),
        ];
        let Step::Done(o) = pill.resume(&mut cx, CallResult::Collected(views)).unwrap() else {
            panic!("expected a verdict");
        };
        assert_eq!(o.verdict, SiftVerdict::Die);
        assert_eq!(o.list_size, Some(2));
    }

    #[test]
    fn naive_flip_zero_sees_no_one() {
        let mut h = Harness::new(vec![0]);
        let mut s = NaiveSift::new(SiftKey::SOLO);
        let mut cx = h.cx(0, 4);
        s.start(&mut cx);
        s.resume(&mut cx, CallResult::Propagated).unwrap();
        let Step::Done(o) = s
            .resume(&mut cx, CallResult::Collected(vec![view(4, &[(0, Stat::LowPri)])]))
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(o.verdict, SiftVerdict::Survive);
    }
}
