//! Checks over the election milestones of a trace.
//!
//! Every election instance in the trace is checked: the single instance of
//! a leader-election run and the per-name instances of a renaming run.

use std::collections::BTreeMap;

use crate::ids::ElectKey;
use crate::sim::trace::Milestone;
use crate::sim::Trace;

use super::{check_history, ElectOutcome, ElectPath, ElectVerdict, HistoryViolation, Operation};

/// What the trace says about one election instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ElectInstance {
    pub invoked: BTreeMap<u32, u64>,
    pub outcomes: BTreeMap<u32, (u64, ElectOutcome)>,
    /// `(event, round)` of every completed round propagate, per processor.
    pub rounds: BTreeMap<u32, Vec<(u64, u32)>>,
    /// Processors entering each round's sifting phase.
    pub entered: BTreeMap<u32, Vec<u32>>,
}

impl ElectInstance {
    pub fn operations(&self) -> Vec<Operation> {
        self.invoked
            .iter()
            .map(|(&p, &invoked_at)| Operation {
                p,
                invoked_at,
                response: self.outcomes.get(&p).map(|&(at, o)| (at, o.verdict)),
            })
            .collect()
    }

    pub fn winners(&self) -> Vec<u32> {
        self.outcomes
            .iter()
            .filter(|(_, (_, o))| o.verdict == ElectVerdict::Win)
            .map(|(&p, _)| p)
            .collect()
    }

    /// Rounds reached by the winner, or by the last processor standing.
    pub fn rounds_used(&self) -> u32 {
        self.outcomes.values().map(|(_, o)| o.round).max().unwrap_or(0)
    }

    /// Participants entering round `r`'s sifting phase, for `r = 1, 2, ...`.
    pub fn round_sizes(&self) -> Vec<usize> {
        let last = self.entered.keys().copied().max().unwrap_or(0);
        (1..=last)
            .map(|r| self.entered.get(&r).map_or(0, Vec::len))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ElectViolation {
    #[error("{key:?}: {violation}")]
    History { key: ElectKey, violation: HistoryViolation },
    #[error("{key:?}: p{p} won by another path ({path:?})")]
    WinPath { key: ElectKey, p: u32, path: ElectPath },
    #[error(
        "{key:?}: p{winner} won in round {round} after propagating it at event {at}, \
         but p{other} finished propagating round {other_round} at event {other_at}"
    )]
    RoundGap {
        key: ElectKey,
        winner: u32,
        round: u32,
        at: u64,
        other: u32,
        other_round: u32,
        other_at: u64,
    },
    #[error("{key:?}: p{p} returned without an invocation")]
    Malformed { key: ElectKey, p: u32 },
}

/// Groups the trace's election milestones by instance.
pub fn instances(trace: &Trace) -> BTreeMap<ElectKey, ElectInstance> {
    let mut out: BTreeMap<ElectKey, ElectInstance> = BTreeMap::new();
    for (at, m) in trace.milestones() {
        match m {
            Milestone::ElectInvoke { p, key } => {
                out.entry(*key).or_default().invoked.insert(*p, at);
            }
            Milestone::ElectVerdict { p, key, outcome } => {
                out.entry(*key).or_default().outcomes.insert(*p, (at, *outcome));
            }
            Milestone::RoundPropagated { p, key, round } => {
                out.entry(*key).or_default().rounds.entry(*p).or_default().push((at, *round));
            }
            Milestone::RoundEntered { p, key, round } => {
                out.entry(*key).or_default().entered.entry(*round).or_default().push(*p);
            }
            _ => {}
        }
    }
    out
}

/// A WIN in round `r` means nobody else had finished propagating round
/// `r − 1` or later when the winner finished propagating `r`.
pub fn check_round_gap(key: ElectKey, inst: &ElectInstance) -> Result<(), ElectViolation> {
    for (&winner, &(_, o)) in &inst.outcomes {
        if o.verdict != ElectVerdict::Win {
            continue;
        }
        let r = o.round;
        let Some(&(at, _)) = inst
            .rounds
            .get(&winner)
            .and_then(|v| v.iter().find(|&&(_, round)| round == r))
        else {
            return Err(ElectViolation::Malformed { key, p: winner });
        };
        for (&q, props) in &inst.rounds {
            if q == winner {
                continue;
            }
            if let Some(&(other_at, other_round)) = props.iter().find(|&&(_, round)| round + 1 >= r) {
                if other_at <= at {
                    return Err(ElectViolation::RoundGap {
                        key,
                        winner,
                        round: r,
                        at,
                        other: q,
                        other_round,
                        other_at,
                    });
                }
            }
        }
    }
    Ok(())
}

/// History, win path and round gap for one instance.
pub fn check_instance(key: ElectKey, inst: &ElectInstance) -> Result<(), ElectViolation> {
    for &p in inst.outcomes.keys() {
        if !inst.invoked.contains_key(&p) {
            return Err(ElectViolation::Malformed { key, p });
        }
    }
    check_history(&inst.operations()).map_err(|violation| ElectViolation::History { key, violation })?;
    for (&p, &(_, o)) in &inst.outcomes {
        if o.verdict == ElectVerdict::Win && o.path != ElectPath::PreroundWin {
            return Err(ElectViolation::WinPath { key, p, path: o.path });
        }
    }
    check_round_gap(key, inst)
}

/// Checks every election instance in the trace; returns the number checked.
pub fn check_trace(trace: &Trace) -> Result<usize, ElectViolation> {
    let all = instances(trace);
    for (&key, inst) in &all {
        check_instance(key, inst)?;
    }
    Ok(all.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(round: u32) -> ElectOutcome {
        ElectOutcome {
            verdict: ElectVerdict::Win,
            round,
            path: ElectPath::PreroundWin,
        }
    }

    #[test]
    fn round_gap_flags_an_early_rival() {
        let mut inst = ElectInstance::default();
        inst.invoked.insert(0, 0);
        inst.invoked.insert(1, 1);
        inst.rounds.insert(0, vec![(5, 1), (9, 2)]);
        inst.rounds.insert(1, vec![(7, 1)]);
        inst.outcomes.insert(0, (12, win(2)));
        assert!(matches!(
            check_round_gap(ElectKey::Solo, &inst),
            Err(ElectViolation::RoundGap { other: 1, .. })
        ));
        inst.rounds.insert(1, vec![(10, 1)]);
        assert_eq!(check_round_gap(ElectKey::Solo, &inst), Ok(()));
    }
}
