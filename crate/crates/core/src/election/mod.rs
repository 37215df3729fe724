//! Leader election (test-and-set) built from a doorway and rounds of
//! heterogeneous sifting.

pub mod analysis;
pub mod history;
mod protocol;

pub use history::{check_history, HistoryTracker, HistoryViolation, Operation};
pub use protocol::{pre_round, Elect, ElectOutcome, ElectPath, ElectVerdict, PreRoundResult};
