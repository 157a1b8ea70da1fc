use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::workload::{BenchResult, TableKind};

pub const CSV_HEADER: &str =
    "table,capacity_log2,load_factor,read_pct,threads,rep,duration_secs,total_ops,ops_per_usec";

/// One repetition of one benchmark configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub table: TableKind,
    pub capacity_log2: u32,
    pub load_factor: f64,
    pub read_pct: u32,
    pub threads: usize,
    pub rep: usize,
    pub duration_secs: f64,
    pub total_ops: u64,
    pub ops_per_usec: f64,
}

impl CsvRow {
    pub fn from_result(r: &BenchResult) -> impl Iterator<Item = CsvRow> + '_ {
        r.reps.iter().map(|rep| CsvRow {
            table: r.config.table,
            capacity_log2: r.config.capacity_log2,
            load_factor: r.config.load_factor,
            read_pct: r.config.read_pct,
            threads: r.config.threads,
            rep: rep.rep,
            duration_secs: rep.elapsed.as_secs_f64(),
            total_ops: rep.total_ops,
            ops_per_usec: rep.ops_per_usec,
        })
    }
}

/// Appends one row per repetition, writing the header only into a new or
/// empty file.
pub fn emit_csv(path: &Path, results: &[BenchResult]) -> csv::Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in results.iter().flat_map(CsvRow::from_result) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> csv::Result<Vec<CsvRow>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
