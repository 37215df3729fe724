//! The getName loop: pick a random uncontended name and run that name's
//! election until one is won.

use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::communicate::{CallResult, CallSpec, Update};
use crate::election::{Elect, ElectOutcome, ElectVerdict};
use crate::ids::{ArrayId, ElectKey};
use crate::idset::IdSet;
use crate::protocol::{Ctx, Fault, Step, StepResult};
use crate::sim::coins::Draw;
use crate::sim::trace::Milestone;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Stage {
    Collect,
    PropagateKnown,
    Elect(Elect),
    PropagateSpot(ElectOutcome),
    Done,
}

/// One participant's getName invocation. Names are `1..=n`; `Contended`
/// is indexed by `name - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rename {
    contended: FixedBitSet,
    iteration: u32,
    spot: u32,
    stage: Stage,
}

/// Index of the `k`-th (0-based) clear bit.
fn nth_zero(bits: &FixedBitSet, k: usize) -> Option<usize> {
    bits.zeroes().nth(k)
}

impl Rename {
    pub fn new(n: usize) -> Self {
        Rename {
            contended: FixedBitSet::with_capacity(n),
            iteration: 0,
            spot: 0,
            stage: Stage::Collect,
        }
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn current_flip(&self) -> Option<u32> {
        match &self.stage {
            Stage::Elect(e) => e.current_flip(),
            _ => None,
        }
    }

    pub fn current_round(&self) -> Option<u32> {
        match &self.stage {
            Stage::Elect(e) => Some(e.round()),
            _ => None,
        }
    }

    fn begin_iteration(&mut self, cx: &mut Ctx<'_>) -> Step<u32> {
        self.iteration += 1;
        cx.note(Milestone::IterationStart {
            p: cx.p(),
            iteration: self.iteration,
        });
        self.stage = Stage::Collect;
        Step::Call(CallSpec::collect(ArrayId::Contended))
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> Step<u32> {
        self.begin_iteration(cx)
    }

    fn elect_step(&mut self, step: Step<ElectOutcome>) -> Step<u32> {
        match step {
            Step::Call(c) => Step::Call(c),
            Step::Done(o) => {
                self.stage = Stage::PropagateSpot(o);
                Step::Call(CallSpec::propagate(ArrayId::Contended, Update::Flag(self.spot)))
            }
        }
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<u32> {
        let p = cx.p();
        match &mut self.stage {
            Stage::Collect => {
                let CallResult::Collected(views) = result else {
                    return Err(Fault::UnexpectedResult { p });
                };
                for v in &views {
                    self.contended
                        .union_with(v.as_flags().expect("contended collect returned a non-flag view"));
                }
                self.stage = Stage::PropagateKnown;
                Ok(Step::Call(CallSpec::propagate(
                    ArrayId::Contended,
                    Update::Flags(Arc::new(self.contended.clone())),
                )))
            }
            Stage::PropagateKnown => {
                let free = cx.n - self.contended.count_ones(..);
                if free == 0 {
                    return Err(Fault::NoFreeName { p });
                }
                let k = cx.draw(Draw::Uniform {
                    choices: free as u32,
                }) as usize;
                let spot = nth_zero(&self.contended, k).ok_or(Fault::NoFreeName { p })?;
                cx.note(Milestone::Pick {
                    p,
                    iteration: self.iteration,
                    name: spot as u32 + 1,
                    view: IdSet::new(self.contended.clone()),
                });
                self.contended.insert(spot);
                self.spot = spot as u32;
                let mut elect = Elect::new(ElectKey::Name(spot as u32 + 1));
                let step = elect.start(cx);
                self.stage = Stage::Elect(elect);
                Ok(self.elect_step(step))
            }
            Stage::Elect(elect) => {
                let step = elect.resume(cx, result)?;
                Ok(self.elect_step(step))
            }
            Stage::PropagateSpot(outcome) => {
                let won = outcome.verdict == ElectVerdict::Win;
                let name = self.spot + 1;
                cx.note(Milestone::IterationEnd {
                    p,
                    iteration: self.iteration,
                    name,
                    won,
                });
                if won {
                    self.stage = Stage::Done;
                    Ok(Step::Done(name))
                } else {
                    Ok(self.begin_iteration(cx))
                }
            }
            Stage::Done => Err(Fault::UnexpectedResult { p }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nth_zero_skips_set_bits() {
        let mut b = FixedBitSet::with_capacity(6);
        b.insert(0);
        b.insert(2);
        assert_eq!(nth_zero(&b, 0), Some(1));
        assert_eq!(nth_zero(&b, 1), Some(3));
        assert_eq!(nth_zero(&b, 3), Some(5));
        assert_eq!(nth_zero(&b, 4), None);
    }
}
