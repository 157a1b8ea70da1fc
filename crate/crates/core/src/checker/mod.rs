//! Correctness checks: history recording, linearizability search, per-key
//! ledger audit and quiescent structural audit.

mod audit;
mod history;
mod linearizability;
pub mod micro;

pub use audit::{
    ledger_audit, ledger_audit_from, structural_audit, to_json_lines, LedgerViolation,
    StructuralViolation,
};
pub use history::{History, OpRecord, Recorder, ThreadLog};
pub use linearizability::{
    check_linearizable, check_linearizable_from, LinearizabilityViolation, SearchBoundExceeded,
    Verdict, MAX_OPS,
};
