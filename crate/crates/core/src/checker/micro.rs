//! Small randomly scheduled concurrent histories.
//!
//! A tiny table is partly filled with keys that share neighborhoods with the
//! few keys under test, so a handful of operations exercises displacement,
//! relocation retries and duplicate-insert races. Scheduling noise makes the
//! interleavings vary even on one core.

use std::collections::HashSet;
use std::sync::Barrier;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use super::history::{History, Recorder};
use crate::baselines::OpKind;
use crate::hash::KeyHasher;
use crate::sched::set_yield_percent;
use crate::set::ConcurrentSet;
use crate::snapshot::TableSnapshot;
use crate::table::TableConfig;

#[derive(Clone, Debug)]
pub struct MicroConfig {
    pub capacity: usize,
    pub neighborhood: usize,
    /// History keys are `1..=keys`.
    pub keys: u64,
    pub max_threads: usize,
    pub max_ops: usize,
    pub max_fillers: usize,
    /// Chance in percent of yielding at each protocol step.
    pub yield_percent: u32,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig {
            capacity: 16,
            neighborhood: 4,
            keys: 4,
            max_threads: 3,
            max_ops: 12,
            max_fillers: 8,
            yield_percent: 30,
        }
    }
}

impl MicroConfig {
    pub fn table_config(&self, seed: u64) -> TableConfig {
        TableConfig::with_capacity(self.capacity)
            .neighborhood(self.neighborhood)
            .max_distance(self.capacity)
            .seed(seed)
    }
}

#[derive(Clone, Debug)]
pub struct MicroRun {
    pub seed: u64,
    pub history: History,
    /// Keys outside the history keys added before the threads start.
    pub fillers: Vec<u64>,
    /// Adds that failed with `TableSaturated` and were left out of the history.
    pub saturated: usize,
    pub snapshot: TableSnapshot,
}

impl MicroRun {
    /// History keys present at the end.
    pub fn final_members(&self) -> HashSet<u64> {
        let fillers: HashSet<u64> = self.fillers.iter().copied().collect();
        self.snapshot
            .members()
            .filter(|k| !fillers.contains(k))
            .collect()
    }
}

fn pick_fillers(cfg: &MicroConfig, hasher: &KeyHasher, rng: &mut SmallRng) -> Vec<u64> {
    let mask = cfg.capacity - 1;
    let homes: Vec<usize> = (1..=cfg.keys).map(|k| hasher.home(k)).collect();
    let wanted = rng.gen_range(0..=cfg.max_fillers);
    let mut fillers = Vec::with_capacity(wanted);
    let mut candidate = 1000 + rng.gen_range(0..1000u64);
    while fillers.len() < wanted {
        candidate += 1;
        let home = hasher.home(candidate);
        let near = homes.iter().any(|&h| {
            let d = h.wrapping_sub(home) & mask;
            d < cfg.neighborhood || (mask + 1 - d) < cfg.neighborhood
        });
        if near && rng.gen_bool(0.5) {
            fillers.push(candidate);
        }
    }
    fillers
}

/// Runs one random history against a fresh table from `make`.
pub fn run_micro<S, F>(cfg: &MicroConfig, seed: u64, make: F) -> MicroRun
where
    S: ConcurrentSet,
    F: FnOnce(TableConfig) -> S,
{
    let mut rng = SmallRng::seed_from_u64(seed);
    let table_config = cfg.table_config(rng.gen());
    let hasher = KeyHasher::new(table_config.seed, table_config.capacity);
    let table = make(table_config);
    let fillers: Vec<u64> = pick_fillers(cfg, &hasher, &mut rng)
        .into_iter()
        .filter(|&k| table.add(k) == Ok(true))
        .collect();

    let threads = rng.gen_range(2..=cfg.max_threads);
    let total = rng.gen_range(threads * 2..=cfg.max_ops);
    let kinds = [
        OpKind::Add,
        OpKind::Add,
        OpKind::Remove,
        OpKind::Remove,
        OpKind::Contains,
    ];
    let mut scripts: Vec<Vec<(OpKind, u64)>> = vec![Vec::new(); threads];
    for i in 0..total {
        scripts[i % threads].push((
            kinds[rng.gen_range(0..kinds.len())],
            rng.gen_range(1..=cfg.keys),
        ));
    }

    let recorder = Recorder::new();
    let barrier = Barrier::new(threads);
    let (logs, saturated): (Vec<_>, Vec<usize>) = std::thread::scope(|s| {
        let handles: Vec<_> = scripts
            .into_iter()
            .enumerate()
            .map(|(tid, script)| {
                let (table, barrier, mut log) = (&table, &barrier, recorder.thread(tid));
                s.spawn(move || {
                    set_yield_percent(cfg.yield_percent, seed.rotate_left(17) ^ tid as u64);
                    barrier.wait();
                    let saturated = script
                        .into_iter()
                        .filter(|&(op, key)| log.apply(table, op, key).is_none())
                        .count();
                    set_yield_percent(0, 0);
                    (log.finish(), saturated)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("micro worker panicked"))
            .unzip()
    });
    MicroRun {
        seed,
        history: History::from_threads(logs),
        fillers,
        saturated: saturated.into_iter().sum(),
        snapshot: table.snapshot(),
    }
}
