use std::collections::HashSet;
use std::sync::Barrier;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::workload::{HarnessError, TableKind};
use crate::baselines::{LockedHopscotchTable, OpKind};
use crate::checker::{
    ledger_audit, structural_audit, History, LedgerViolation, Recorder, StructuralViolation,
};
use crate::hash::mix64;
use crate::sched::set_yield_percent;
use crate::set::ConcurrentSet;
use crate::table::{HopscotchTable, TableConfig};

/// Recorded random workload on an initially empty table.
#[derive(Clone, Debug, Serialize)]
pub struct StressConfig {
    pub table: TableKind,
    pub capacity: usize,
    /// Keys are drawn from `1..=keyspace`.
    pub keyspace: u64,
    pub threads: usize,
    pub total_ops: usize,
    pub update_pct: u32,
    pub seed: u64,
    pub yield_percent: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct StressReport {
    pub operations: usize,
    pub saturated: usize,
    pub ledger: Vec<LedgerViolation>,
    pub structural: Vec<StructuralViolation>,
}

impl StressReport {
    pub fn is_clean(&self) -> bool {
        self.ledger.is_empty() && self.structural.is_empty()
    }
}

fn drive(t: &dyn ConcurrentSet, cfg: &StressConfig) -> (History, usize) {
    let recorder = Recorder::new();
    let barrier = Barrier::new(cfg.threads);
    let (logs, saturated): (Vec<_>, Vec<usize>) = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|tid| {
                let (barrier, mut log) = (&barrier, recorder.thread(tid));
                let ops =
                    cfg.total_ops / cfg.threads + usize::from(tid < cfg.total_ops % cfg.threads);
                s.spawn(move || {
                    let seed = mix64(cfg.seed ^ mix64(tid as u64 + 1));
                    let mut rng = SmallRng::seed_from_u64(seed);
                    set_yield_percent(cfg.yield_percent, seed);
                    barrier.wait();
                    let mut saturated = 0;
                    for _ in 0..ops {
                        let key = rng.gen_range(1..=cfg.keyspace);
                        let op = if rng.gen_range(0..100) >= cfg.update_pct {
                            OpKind::Contains
                        } else if rng.gen_bool(0.5) {
                            OpKind::Add
                        } else {
                            OpKind::Remove
                        };
                        saturated += usize::from(log.apply(t, op, key).is_none());
                    }
                    set_yield_percent(0, 0);
                    (log.finish(), saturated)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stress worker panicked"))
            .unzip()
    });
    (History::from_threads(logs), saturated.into_iter().sum())
}

pub fn run_stress(cfg: &StressConfig) -> Result<StressReport, HarnessError> {
    if cfg.threads == 0 || cfg.keyspace == 0 || cfg.update_pct > 100 {
        return Err(HarnessError::Config(format!(
            "invalid stress config {cfg:?}"
        )));
    }
    let table_config = TableConfig::with_capacity(cfg.capacity).seed(cfg.seed);
    let table: Box<dyn ConcurrentSet> = match cfg.table {
        TableKind::HsLockfree => Box::new(HopscotchTable::new(table_config)?),
        TableKind::HsLocked => Box::new(LockedHopscotchTable::new(table_config, cfg.threads)?),
    };
    let (history, saturated) = drive(table.as_ref(), cfg);
    let snapshot = table.snapshot();
    let members: HashSet<u64> = snapshot.members().collect();
    Ok(StressReport {
        operations: history.len(),
        saturated,
        ledger: ledger_audit(&history, &members),
        structural: structural_audit(&snapshot),
    })
}
