//! Identifiers for processors, protocol instances and replicated variables.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a processor in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessorId(pub u32);

impl ProcessorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ProcessorId {
    fn from(i: usize) -> Self {
        ProcessorId(i as u32)
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A leader-election instance. Renaming runs one instance per name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectKey {
    Solo,
    /// Election for the name `1..=n`.
    Name(u32),
}

/// A sifting instance: either standalone (`elect == None`) or the sifting
/// phase of round `round` inside an election.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiftKey {
    pub elect: Option<ElectKey>,
    pub round: u32,
}

impl SiftKey {
    pub const SOLO: SiftKey = SiftKey {
        elect: None,
        round: 0,
    };

    pub fn in_round(elect: ElectKey, round: u32) -> Self {
        SiftKey {
            elect: Some(elect),
            round,
        }
    }
}

/// A replicated array. Every processor holds a view of each array it has
/// heard about; distinct instances never share an array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayId {
    /// `Status[n]` of one sifting instance.
    Status(SiftKey),
    /// The single `door` flag of an election.
    Door(ElectKey),
    /// `Round[n]` of an election.
    Round(ElectKey),
    /// `Contended[n]` of the renaming protocol, indexed by `name - 1`.
    Contended,
}

impl ArrayId {
    pub fn kind(self) -> ArrayKind {
        match self {
            ArrayId::Status(_) => ArrayKind::Status,
            ArrayId::Door(_) => ArrayKind::Door,
            ArrayId::Round(_) => ArrayKind::Round,
            ArrayId::Contended => ArrayKind::Flags,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArrayKind {
    Status,
    Door,
    Round,
    Flags,
}

/// One entry of a replicated array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId {
    pub array: ArrayId,
    pub index: u32,
}
