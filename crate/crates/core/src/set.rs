use thiserror::Error;

use crate::snapshot::TableSnapshot;

/// Reserved key value marking an empty key slot. Never a valid key.
pub const NIL: u64 = 0;

/// The table has no room for the key within its probe or neighborhood
/// limits. Tables do not resize; the caller needs a larger capacity.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("table saturated at home bucket {home}; a larger capacity is needed")]
pub struct TableSaturated {
    pub home: usize,
}

/// A concurrent set of non-zero 64-bit keys.
pub trait ConcurrentSet: Send + Sync {
    fn contains(&self, key: u64) -> bool;

    /// `Ok(true)` if the key was inserted by this call, `Ok(false)` if it was
    /// already present.
    fn add(&self, key: u64) -> Result<bool, TableSaturated>;

    fn remove(&self, key: u64) -> bool;

    fn capacity(&self) -> usize;

    /// Bucket-level view of the table. Only meaningful at quiescence.
    fn snapshot(&self) -> TableSnapshot;

    /// Number of keys present, by full scan.
    fn len(&self) -> usize {
        self.snapshot().members().count()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
