//! Poison-pill sifting: the basic, heterogeneous and naive variants, and
//! checkers for their guarantees.

pub mod analysis;
mod protocol;

pub use protocol::{
    bias, sqrt_bias, BasicPill, EmptyListError, HeteroPill, ListBook, NaiveSift, SiftOutcome, SiftVerdict,
};
