pub mod baselines;
pub mod checker;
pub mod harness;
pub mod hash;
pub mod kcas;
pub mod sched;
pub mod set;
pub mod snapshot;
pub mod table;

pub use set::{ConcurrentSet, TableSaturated, NIL};
pub use table::{HopscotchTable, TableConfig};
