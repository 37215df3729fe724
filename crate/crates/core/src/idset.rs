//! A cheaply cloneable set of processor indices (or name indices).

use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An immutable bitset over `[0, len)`. Serialized as `{"len": _, "ids": [_]}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IdSet(Arc<FixedBitSet>);

impl IdSet {
    pub fn new(bits: FixedBitSet) -> Self {
        IdSet(Arc::new(bits))
    }

    pub fn from_arc(bits: Arc<FixedBitSet>) -> Self {
        IdSet(bits)
    }

    pub fn from_ids(len: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = FixedBitSet::with_capacity(len);
        for i in ids {
            bits.insert(i);
        }
        IdSet::new(bits)
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.0
    }

    pub fn arc(&self) -> &Arc<FixedBitSet> {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(i)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn capacity(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.ones()).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    len: usize,
    ids: Vec<u32>,
}

impl Serialize for IdSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire {
            len: self.0.len(),
            ids: self.0.ones().map(|i| i as u32).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = Wire::deserialize(d)?;
        let mut bits = FixedBitSet::with_capacity(w.len);
        for i in w.ids {
            if i as usize >= w.len {
                return Err(D::Error::custom(format!("id {i} outside set of length {}", w.len)));
            }
            bits.insert(i as usize);
        }
        Ok(IdSet::new(bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let s = IdSet::from_ids(10, [1, 4, 9]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"len":10,"ids":[1,4,9]}"#);
        let back: IdSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_out_of_range_ids() {
        assert!(serde_json::from_str::<IdSet>(r#"{"len":2,"ids":[2]}"#).is_err());
    }
}
