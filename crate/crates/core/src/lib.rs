//! Poison-pill sifting, leader election and renaming over an asynchronous
//! message-passing simulator.
//!
//! The [`sim`] module runs `n` processors under an adversarial scheduler.
//! Protocols talk to the rest of the system only through quorum
//! `communicate` calls ([`communicate`]). The [`sifting`], [`election`] and
//! [`renaming`] modules hold the protocols and the checkers for their
//! properties; [`adversary`] holds the schedulers and [`experiment`] the
//! trial runner and statistics.

pub mod adversary;
pub mod communicate;
pub mod election;
pub mod experiment;
pub mod ids;
pub mod idset;
pub mod protocol;
pub mod renaming;
pub mod sifting;
pub mod sim;

pub use ids::{ArrayId, ElectKey, ProcessorId, SiftKey};
pub use idset::IdSet;
pub use protocol::{Outcome, ProtocolKind};
