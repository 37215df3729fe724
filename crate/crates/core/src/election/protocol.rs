//! Doorway, PreRound and the LeaderElect round loop.

use serde::{Deserialize, Serialize};

use crate::communicate::{CallResult, CallSpec, Update};
use crate::ids::{ArrayId, ElectKey, SiftKey};
use crate::protocol::{Ctx, Fault, Step, StepResult};
use crate::sifting::{HeteroPill, SiftVerdict};
use crate::sim::trace::Milestone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectVerdict {
    Win,
    Lose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectPath {
    DoorwayLose,
    PreroundWin,
    PreroundLose,
    SiftLose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElectOutcome {
    pub verdict: ElectVerdict,
    /// The last round entered (0 for a doorway loss).
    pub round: u32,
    pub path: ElectPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreRoundResult {
    Proceed,
    Win,
    Lose,
}

/// PreRound's decision for own round `r` against the largest round `big_r`
/// seen for anyone else.
pub fn pre_round(r: u32, big_r: u32) -> PreRoundResult {
    if r < big_r {
        PreRoundResult::Lose
    } else if big_r + 1 < r {
        PreRoundResult::Win
    } else {
        PreRoundResult::Proceed
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Stage {
    DoorCheck,
    DoorClose,
    RoundPropagate,
    RoundCollect,
    Sift(HeteroPill),
    Done,
}

/// One participant's LeaderElect invocation on instance `key`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Elect {
    key: ElectKey,
    round: u32,
    stage: Stage,
}

impl Elect {
    pub fn new(key: ElectKey) -> Self {
        Elect {
            key,
            round: 0,
            stage: Stage::DoorCheck,
        }
    }

    pub fn key(&self) -> ElectKey {
        self.key
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn current_flip(&self) -> Option<u32> {
        match &self.stage {
            Stage::Sift(s) => s.flip(),
            _ => None,
        }
    }

    pub fn start(&mut self, cx: &mut Ctx<'_>) -> Step<ElectOutcome> {
        cx.note(Milestone::ElectInvoke {
            p: cx.p(),
            key: self.key,
        });
        self.stage = Stage::DoorCheck;
        Step::Call(CallSpec::collect(ArrayId::Door(self.key)))
    }

    fn done(&mut self, cx: &mut Ctx<'_>, verdict: ElectVerdict, path: ElectPath) -> Step<ElectOutcome> {
        self.stage = Stage::Done;
        let outcome = ElectOutcome {
            verdict,
            round: self.round,
            path,
        };
        cx.note(Milestone::ElectVerdict {
            p: cx.p(),
            key: self.key,
            outcome,
        });
        Step::Done(outcome)
    }

    /// Records the current round and starts propagating it.
    fn begin_round(&mut self, p: u32) -> Step<ElectOutcome> {
        self.stage = Stage::RoundPropagate;
        Step::Call(CallSpec::propagate(
            ArrayId::Round(self.key),
            Update::Round {
                owner: p,
                round: self.round,
            },
        ))
    }

    pub fn resume(&mut self, cx: &mut Ctx<'_>, result: CallResult) -> StepResult<ElectOutcome> {
        let p = cx.p();
        let key = self.key;
        match &mut self.stage {
            Stage::DoorCheck => {
                let CallResult::Collected(views) = result else {
                    return Err(Fault::UnexpectedResult { p });
                };
                if views.iter().any(|v| v.as_door() == Some(true)) {
                    cx.note(Milestone::Doorway {
                        p,
                        key,
                        proceed: false,
                    });
                    return Ok(self.done(cx, ElectVerdict::Lose, ElectPath::DoorwayLose));
                }
                self.stage = Stage::DoorClose;
                Ok(Step::Call(CallSpec::propagate(ArrayId::Door(key), Update::Door)))
            }
            Stage::DoorClose => {
                cx.note(Milestone::Doorway {
                    p,
                    key,
                    proceed: true,
                });
                self.round = 1;
                Ok(self.begin_round(p))
            }
            Stage::RoundPropagate => {
                cx.note(Milestone::RoundPropagated {
                    p,
                    key,
                    round: self.round,
                });
                self.stage = Stage::RoundCollect;
                Ok(Step::Call(CallSpec::collect(ArrayId::Round(key))))
            }
            Stage::RoundCollect => {
                let CallResult::Collected(views) = result else {
                    return Err(Fault::UnexpectedResult { p });
                };
                let big_r = views
                    .iter()
                    .map(|v| {
                        v.as_rounds()
                            .expect("round collect returned a non-round view")
                            .max_excluding(p as usize)
                    })
                    .max()
                    .unwrap_or(0);
                let r = self.round;
                let result = pre_round(r, big_r);
                cx.note(Milestone::PreRound {
                    p,
                    key,
                    round: r,
                    max_other: big_r,
                    result,
                });
                match result {
                    PreRoundResult::Lose => Ok(self.done(cx, ElectVerdict::Lose, ElectPath::PreroundLose)),
                    PreRoundResult::Win => Ok(self.done(cx, ElectVerdict::Win, ElectPath::PreroundWin)),
                    PreRoundResult::Proceed => {
                        cx.note(Milestone::RoundEntered { p, key, round: r });
                        let mut sift = HeteroPill::new(SiftKey::in_round(key, r));
                        let step = sift.start(cx);
                        self.stage = Stage::Sift(sift);
                        match step {
                            Step::Call(c) => Ok(Step::Call(c)),
                            Step::Done(_) => unreachable!("sifting always communicates first"),
                        }
                    }
                }
            }
            Stage::Sift(sift) => match sift.resume(cx, result)? {
                Step::Call(c) => Ok(Step::Call(c)),
                Step::Done(o) if o.verdict == SiftVerdict::Die => {
                    Ok(self.done(cx, ElectVerdict::Lose, ElectPath::SiftLose))
                }
                Step::Done(_) => {
                    self.round += 1;
                    Ok(self.begin_round(p))
                }
            },
            Stage::Done => Err(Fault::UnexpectedResult { p }),
        }
    }
}
