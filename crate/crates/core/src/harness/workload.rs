use std::fmt;
use std::sync::atomic::AtomicBool;
use std::sync::atomic::Ordering::Relaxed;
use std::sync::{Barrier, Once};
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::LockedHopscotchTable;
use crate::hash::mix64;
use crate::set::{ConcurrentSet, TableSaturated};
use crate::table::{ConfigError, HopscotchTable, TableConfig};

/// Largest allowed gap between measured and configured load factor.
pub const OCCUPANCY_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum TableKind {
    #[serde(rename = "hs-lockfree")]
    #[value(name = "hs-lockfree")]
    HsLockfree,
    #[serde(rename = "hs-locked")]
    #[value(name = "hs-locked")]
    HsLocked,
}

impl TableKind {
    pub fn name(self) -> &'static str {
        match self {
            TableKind::HsLockfree => "hs-lockfree",
            TableKind::HsLocked => "hs-locked",
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub table: TableKind,
    pub capacity_log2: u32,
    pub load_factor: f64,
    /// Share of `contains` operations; the rest alternate add and remove.
    pub read_pct: u32,
    pub threads: usize,
    pub duration: Duration,
    pub reps: usize,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            table: TableKind::HsLockfree,
            capacity_log2: 20,
            load_factor: 0.6,
            read_pct: 90,
            threads: 1,
            duration: Duration::from_secs(2),
            reps: 3,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn capacity(&self) -> usize {
        1 << self.capacity_log2
    }

    pub fn prefill_count(&self) -> usize {
        (self.capacity() as f64 * self.load_factor).round() as usize
    }

    /// Keys are drawn from `1..=keyrange`, twice the prefill size.
    pub fn keyrange(&self) -> u64 {
        (self.capacity() as f64 * self.load_factor * 2.0).round() as u64
    }

    pub fn update_pct(&self) -> u32 {
        100 - self.read_pct
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |why: String| Err(HarnessError::Config(why));
        if !(1..=40).contains(&self.capacity_log2) {
            return bad(format!(
                "capacity_log2 {} must be in 1..=40",
                self.capacity_log2
            ));
        }
        if !(self.load_factor > 0.0 && self.load_factor < 1.0) {
            return bad(format!(
                "load factor {} must be in (0, 1)",
                self.load_factor
            ));
        }
        if self.read_pct > 100 {
            return bad(format!("read_pct {} exceeds 100", self.read_pct));
        }
        if self.threads == 0 || self.reps == 0 {
            return bad("threads and reps must be positive".into());
        }
        if self.duration.is_zero() {
            return bad("duration must be positive".into());
        }
        Ok(())
    }

    pub fn table_config(&self) -> TableConfig {
        TableConfig::with_capacity(self.capacity()).seed(self.seed)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] ConfigError),
    #[error("prefill failed after {inserted} keys: {source}")]
    Prefill {
        inserted: usize,
        source: TableSaturated,
    },
}

pub fn make_table(cfg: &WorkloadConfig) -> Result<Box<dyn ConcurrentSet>, HarnessError> {
    Ok(match cfg.table {
        TableKind::HsLockfree => Box::new(HopscotchTable::new(cfg.table_config())?),
        TableKind::HsLocked => {
            Box::new(LockedHopscotchTable::new(cfg.table_config(), cfg.threads)?)
        }
    })
}

/// Inserts `round(capacity * load_factor)` distinct keys sampled uniformly
/// from `1..=keyrange`.
pub fn prefill(
    t: &dyn ConcurrentSet,
    cfg: &WorkloadConfig,
    seed: u64,
) -> Result<Vec<u64>, HarnessError> {
    let mut rng = SmallRng::seed_from_u64(seed);
    let keys: Vec<u64> =
        rand::seq::index::sample(&mut rng, cfg.keyrange() as usize, cfg.prefill_count())
            .into_iter()
            .map(|i| i as u64 + 1)
            .collect();
    for (inserted, &k) in keys.iter().enumerate() {
        t.add(k)
            .map_err(|source| HarnessError::Prefill { inserted, source })?;
    }
    Ok(keys)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub per_thread_ops: Vec<u64>,
    pub total_ops: u64,
    pub elapsed: Duration,
    pub ops_per_usec: f64,
    pub measured_load: f64,
    /// Adds that failed with `TableSaturated` (counted as operations).
    pub saturated: u64,
    /// Every worker's first operation came after every worker reached the
    /// start barrier.
    pub start_barrier_ok: bool,
}

impl RepResult {
    pub fn occupancy_ok(&self, load_factor: f64) -> bool {
        (self.measured_load - load_factor).abs() <= OCCUPANCY_TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: WorkloadConfig,
    pub reps: Vec<RepResult>,
}

impl BenchResult {
    pub fn mean_ops_per_usec(&self) -> f64 {
        self.reps.iter().map(|r| r.ops_per_usec).sum::<f64>() / self.reps.len() as f64
    }
}

fn thread_seed(seed: u64, rep: usize, tid: usize) -> u64 {
    mix64(mix64(seed ^ mix64(rep as u64 + 1)) ^ (tid as u64).wrapping_add(1))
}

fn pin(tid: usize) {
    static WARN: Once = Once::new();
    let pinned = core_affinity::get_core_ids()
        .and_then(|ids| (ids.len() > tid).then(|| ids[tid]))
        .is_some_and(core_affinity::set_for_current);
    if !pinned {
        WARN.call_once(|| {
            log::warn!("could not pin worker {tid} to its own core; running unpinned")
        });
    }
}

struct WorkerStats {
    ops: u64,
    saturated: u64,
    arrived: Instant,
    first_op: Instant,
}

fn worker(
    t: &dyn ConcurrentSet,
    cfg: &WorkloadConfig,
    seed: u64,
    start: &Barrier,
    stop: &AtomicBool,
) -> WorkerStats {
    let mut rng = SmallRng::seed_from_u64(seed);
    let keyrange = cfg.keyrange();
    let mut add_next = rng.gen_bool(0.5);
    let (mut ops, mut saturated) = (0u64, 0u64);
    let arrived = Instant::now();
    start.wait();
    let first_op = Instant::now();
    while !stop.load(Relaxed) {
        for _ in 0..64 {
            let key = rng.gen_range(1..=keyrange);
            if rng.gen_range(0..100) < cfg.read_pct {
                std::hint::black_box(t.contains(key));
            } else if add_next {
                saturated += u64::from(t.add(key).is_err());
                add_next = false;
            } else {
                std::hint::black_box(t.remove(key));
                add_next = true;
            }
        }
        ops += 64;
    }
    WorkerStats {
        ops,
        saturated,
        arrived,
        first_op,
    }
}

/// One timed run on a fresh, prefilled table.
pub fn run_repetition(cfg: &WorkloadConfig, rep: usize) -> Result<RepResult, HarnessError> {
    cfg.validate()?;
    let table = make_table(cfg)?;
    prefill(table.as_ref(), cfg, thread_seed(cfg.seed, rep, usize::MAX))?;
    let start = Barrier::new(cfg.threads + 1);
    let stop = AtomicBool::new(false);
    let (stats, elapsed) = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|tid| {
                let (table, start, stop) = (table.as_ref(), &start, &stop);
                s.spawn(move || {
                    pin(tid);
                    worker(table, cfg, thread_seed(cfg.seed, rep, tid), start, stop)
                })
            })
            .collect();
        start.wait();
        let began = Instant::now();
        std::thread::sleep(cfg.duration);
        stop.store(true, Relaxed);
        let stats: Vec<WorkerStats> = handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect();
        (stats, began.elapsed())
    });
    let last_arrival = stats
        .iter()
        .map(|s| s.arrived)
        .max()
        .expect("at least one worker");
    let per_thread_ops: Vec<u64> = stats.iter().map(|s| s.ops).collect();
    let total_ops = per_thread_ops.iter().sum();
    Ok(RepResult {
        rep,
        total_ops,
        per_thread_ops,
        elapsed,
        ops_per_usec: total_ops as f64 / (elapsed.as_secs_f64() * 1e6),
        measured_load: table.len() as f64 / cfg.capacity() as f64,
        saturated: stats.iter().map(|s| s.saturated).sum(),
        start_barrier_ok: stats.iter().all(|s| s.first_op >= last_arrival),
    })
}

pub fn run_benchmark(cfg: &WorkloadConfig) -> Result<BenchResult, HarnessError> {
    cfg.validate()?;
    let reps = (0..cfg.reps)
        .map(|rep| run_repetition(cfg, rep))
        .collect::<Result<_, _>>()?;
    Ok(BenchResult {
        config: cfg.clone(),
        reps,
    })
}
