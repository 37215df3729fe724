//! Test-and-set histories: the WIN/LOSE linearizability conditions.
//!
//! A history is valid when (a) at most one operation returns WIN, (b) some
//! operation returns WIN once every invocation has returned, and (c) some
//! candidate winner (the WIN returner, or else an invocation still pending)
//! was invoked before every LOSE response.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::ElectVerdict;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case", tag = "violation")]
pub enum HistoryViolation {
    #[error("two WINs: p{first} and p{second}")]
    TwoWinners { first: u32, second: u32 },
    #[error("every invocation returned and none returned WIN")]
    NoWinner,
    #[error("p{loser} returned LOSE before the winner p{winner} was invoked")]
    LoseBeforeWinner { loser: u32, winner: u32 },
    #[error("no pending invocation started before every LOSE response")]
    NoCandidate,
    #[error("malformed history: {0}")]
    Malformed(String),
}

/// An online summary of a history, small enough to fold into explorer
/// state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HistoryTracker {
    invoked: FixedBitSet,
    returned: FixedBitSet,
    /// Processors invoked before every LOSE response so far; `None` until
    /// the first LOSE.
    guard: Option<FixedBitSet>,
    /// The first LOSE responder, reported as the witness.
    first_lose: Option<u32>,
    winner: Option<u32>,
    extra_winner: Option<u32>,
}

impl HistoryTracker {
    pub fn new(n: usize) -> Self {
        HistoryTracker {
            invoked: FixedBitSet::with_capacity(n),
            returned: FixedBitSet::with_capacity(n),
            guard: None,
            first_lose: None,
            winner: None,
            extra_winner: None,
        }
    }

    pub fn invoke(&mut self, p: usize) {
        self.invoked.insert(p);
    }

    pub fn respond(&mut self, p: usize, verdict: ElectVerdict) {
        self.returned.insert(p);
        match verdict {
            ElectVerdict::Win => match self.winner {
                None => self.winner = Some(p as u32),
                Some(_) => {
                    self.extra_winner.get_or_insert(p as u32);
                }
            },
            ElectVerdict::Lose => {
                self.first_lose.get_or_insert(p as u32);
                match &mut self.guard {
                    Some(g) => g.intersect_with(&self.invoked),
                    None => self.guard = Some(self.invoked.clone()),
                }
            }
        }
    }

    pub fn winner(&self) -> Option<u32> {
        self.winner
    }

    /// Checks the history recorded so far. Invocations of crashed
    /// processors simply stay pending.
    pub fn check(&self) -> Result<(), HistoryViolation> {
        if let (Some(first), Some(second)) = (self.winner, self.extra_winner) {
            return Err(HistoryViolation::TwoWinners { first, second });
        }
        let all_returned = self.invoked == self.returned;
        match self.winner {
            Some(w) => {
                if let Some(g) = &self.guard {
                    if !g.contains(w as usize) {
                        return Err(HistoryViolation::LoseBeforeWinner {
                            loser: self.first_lose.unwrap_or(u32::MAX),
                            winner: w,
                        });
                    }
                }
                Ok(())
            }
            None if all_returned && self.invoked.count_ones(..) > 0 => Err(HistoryViolation::NoWinner),
            None => match &self.guard {
                None => Ok(()),
                Some(g) => {
                    let mut pending = self.invoked.clone();
                    pending.difference_with(&self.returned);
                    if pending.is_disjoint(g) {
                        Err(HistoryViolation::NoCandidate)
                    } else {
                        Ok(())
                    }
                }
            },
        }
    }
}

/// One operation of a history, reconstructed from a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Operation {
    pub p: u32,
    pub invoked_at: u64,
    pub response: Option<(u64, ElectVerdict)>,
}

/// Checks a history given as explicit operations, with a concrete witness
/// on failure.
pub fn check_history(ops: &[Operation]) -> Result<(), HistoryViolation> {
    let wins: Vec<&Operation> = ops
        .iter()
        .filter(|o| matches!(o.response, Some((_, ElectVerdict::Win))))
        .collect();
    if wins.len() > 1 {
        return Err(HistoryViolation::TwoWinners {
            first: wins[0].p,
            second: wins[1].p,
        });
    }
    for o in ops {
        if let Some((at, _)) = o.response {
            if at < o.invoked_at {
                return Err(HistoryViolation::Malformed(format!(
                    "p{} responds at {at} before invoking at {}",
                    o.p, o.invoked_at
                )));
            }
        }
    }
    let loses: Vec<(u64, u32)> = ops
        .iter()
        .filter_map(|o| match o.response {
            Some((at, ElectVerdict::Lose)) => Some((at, o.p)),
            _ => None,
        })
        .collect();
    let first_lose = loses.iter().min().copied();
    let before_all_loses = |w: &Operation| first_lose.is_none_or(|(at, _)| w.invoked_at < at);
    if let Some(w) = wins.first() {
        return match first_lose {
            Some((at, loser)) if w.invoked_at >= at => Err(HistoryViolation::LoseBeforeWinner {
                loser,
                winner: w.p,
            }),
            _ => Ok(()),
        };
    }
    let pending: Vec<&Operation> = ops.iter().filter(|o| o.response.is_none()).collect();
    if pending.is_empty() {
        return if ops.is_empty() {
            Ok(())
        } else {
            Err(HistoryViolation::NoWinner)
        };
    }
    if pending.iter().any(|w| before_all_loses(w)) {
        Ok(())
    } else {
        Err(HistoryViolation::NoCandidate)
    }
}
