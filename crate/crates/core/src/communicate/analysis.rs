//! Checks over the communicate records of a trace.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;

use crate::ids::ArrayId;
use crate::sim::trace::{Milestone, Trace, TraceMode};

use super::{quorum, Entry};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CommViolation {
    #[error("p{p} call {call} completed with {acks} ACKs; a quorum is {quorum}")]
    ShortQuorum { p: u32, call: u32, acks: u32, quorum: usize },
    #[error("p{p} call {call} counted {acks} ACKs from {responders} responders")]
    ResponderCount { p: u32, call: u32, acks: u32, responders: usize },
    #[error("responders of p{p} call {call} and p{q} call {other} are disjoint")]
    Disjoint { p: u32, call: u32, q: u32, other: u32 },
    #[error("p{at} view of {array:?}[{index}] went from {from:?} to {to:?}")]
    NotAscending {
        at: u32,
        array: ArrayId,
        index: u32,
        from: Entry,
        to: Entry,
    },
    #[error("p{at} view of {array:?}[{index}] changed from {from:?}, but it held {held:?}")]
    Broken {
        at: u32,
        array: ArrayId,
        index: u32,
        from: Entry,
        held: Entry,
    },
    #[error("p{at} received an incomparable {array:?} value from p{from}")]
    Conflict { at: u32, array: ArrayId, from: u32 },
}

/// Every completed call counted a quorum of ACKs. Full traces also carry
/// the responder sets, which must pairwise intersect.
pub fn check_quorum_intersection(trace: &Trace) -> Result<usize, CommViolation> {
    let n = trace.header.n;
    let q = quorum(n);
    let mut sets: Vec<(u32, u32, &FixedBitSet)> = Vec::new();
    let mut calls = 0;
    for (_, m) in trace.milestones() {
        let Milestone::CallComplete {
            p,
            call,
            acks,
            responders,
        } = m
        else {
            continue;
        };
        calls += 1;
        if (*acks as usize) < q {
            return Err(CommViolation::ShortQuorum {
                p: *p,
                call: *call,
                acks: *acks,
                quorum: q,
            });
        }
        if let Some(r) = responders {
            if r.len() != *acks as usize {
                return Err(CommViolation::ResponderCount {
                    p: *p,
                    call: *call,
                    acks: *acks,
                    responders: r.len(),
                });
            }
            sets.push((*p, *call, r.bits()));
        }
    }
    if trace.header.mode == TraceMode::Full {
        for (i, &(p, call, a)) in sets.iter().enumerate() {
            for &(q, other, b) in &sets[i + 1..] {
                if a.is_disjoint(b) {
                    return Err(CommViolation::Disjoint { p, call, q, other });
                }
            }
        }
    }
    Ok(calls)
}

/// Each processor's view of each entry only ever ascends, and the
/// recorded changes chain: every change starts where the previous one
/// ended.
pub fn check_view_monotonicity(trace: &Trace) -> Result<usize, CommViolation> {
    let mut last: BTreeMap<(u32, ArrayId, u32), Entry> = BTreeMap::new();
    let mut changes = 0;
    for (_, m) in trace.milestones() {
        match m {
            Milestone::ViewChange {
                at,
                array,
                index,
                from,
                to,
            } => {
                changes += 1;
                if from == to || !from.leq(*to) {
                    return Err(CommViolation::NotAscending {
                        at: *at,
                        array: *array,
                        index: *index,
                        from: *from,
                        to: *to,
                    });
                }
                if let Some(held) = last.insert((*at, *array, *index), *to) {
                    if held != *from {
                        return Err(CommViolation::Broken {
                            at: *at,
                            array: *array,
                            index: *index,
                            from: *from,
                            held,
                        });
                    }
                }
            }
            Milestone::ViewConflict { at, array, from } => {
                return Err(CommViolation::Conflict {
                    at: *at,
                    array: *array,
                    from: *from,
                })
            }
            _ => {}
        }
    }
    Ok(changes)
}
