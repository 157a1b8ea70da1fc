//! Reference implementations: a blocking Hopscotch table and a serial set.

mod locked;
mod oracle;

pub use locked::LockedHopscotchTable;
pub use oracle::{OpKind, OracleSet};
