//! Strong renaming: every participant acquires a distinct name in `1..=n`.

pub mod analysis;
mod protocol;

pub use protocol::Rename;
