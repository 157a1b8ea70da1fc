use serde::Serialize;

use crate::hash::KeyHasher;
use crate::table::BucketState;

/// Copy of one bucket taken at quiescence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BucketView {
    pub key: u64,
    pub state: BucketState,
    pub version: u64,
    pub bitmask: u64,
    /// Relocation counter (lock-free table) or segment timestamp (locked).
    pub reloc: u64,
}

/// Bucket-level copy of a whole table, used by the structural audit.
#[derive(Clone, Debug)]
pub struct TableSnapshot {
    pub neighborhood: usize,
    pub hasher: KeyHasher,
    pub buckets: Vec<BucketView>,
}

impl TableSnapshot {
    pub fn capacity(&self) -> usize {
        self.buckets.len()
    }

    pub fn home(&self, key: u64) -> usize {
        self.hasher.home(key)
    }

    /// Distance from `from` forward to `to`, wrapping around the table.
    pub fn distance(&self, from: usize, to: usize) -> usize {
        to.wrapping_sub(from) & (self.capacity() - 1)
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        self.buckets
            .iter()
            .filter(|b| b.state == BucketState::Member)
            .map(|b| b.key)
    }
}
