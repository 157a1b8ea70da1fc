//! Throughput benchmark and stress runs.

mod output;
mod stress;
mod workload;

pub use output::{emit_csv, read_csv, CsvRow, CSV_HEADER};
pub use stress::{run_stress, StressConfig, StressReport};
pub use workload::{
    make_table, prefill, run_benchmark, run_repetition, BenchResult, HarnessError, RepResult,
    TableKind, WorkloadConfig, OCCUPANCY_TOLERANCE,
};
