//! Blocking Hopscotch table with bit-masks and segment locks.
//!
//! Buckets are split into contiguous segments, each with a spinlock and a
//! timestamp. Updates lock the home segment of their key; displacement also
//! locks the home segment of each entry it moves and bumps that segment's
//! timestamp. `contains` takes no locks and retries when the timestamp of
//! its home segment moved during the scan.

use std::fmt;
use std::sync::atomic::Ordering::{Acquire, Relaxed, Release, SeqCst};
use std::sync::atomic::{AtomicBool, AtomicU64};

use crossbeam_utils::{Backoff, CachePadded};

use crate::hash::KeyHasher;
use crate::set::{ConcurrentSet, TableSaturated, NIL};
use crate::snapshot::{BucketView, TableSnapshot};
use crate::table::{BucketState, ConfigError, TableConfig};

/// Key slot of a bucket claimed by an inserter but not yet filled.
const BUSY: u64 = u64::MAX;

struct Segment {
    lock: AtomicBool,
    timestamp: AtomicU64,
}

struct SegmentGuard<'a>(&'a Segment);

impl Drop for SegmentGuard<'_> {
    fn drop(&mut self) {
        self.0.lock.store(false, Release);
    }
}

impl Segment {
    fn lock(&self) -> SegmentGuard<'_> {
        let backoff = Backoff::new();
        loop {
            if let Some(guard) = self.try_lock() {
                return guard;
            }
            while self.lock.load(Relaxed) {
                backoff.snooze();
            }
        }
    }

    fn try_lock(&self) -> Option<SegmentGuard<'_>> {
        self.lock
            .compare_exchange(false, true, Acquire, Relaxed)
            .is_ok()
            .then(|| SegmentGuard(self))
    }
}

enum Step {
    Moved(usize, usize),
    Stuck,
    Contended,
}

pub struct LockedHopscotchTable {
    keys: Box<[AtomicU64]>,
    bitmasks: Box<[AtomicU64]>,
    segments: Box<[CachePadded<Segment>]>,
    segment_shift: u32,
    mask: usize,
    config: TableConfig,
    hasher: KeyHasher,
}

impl fmt::Debug for LockedHopscotchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LockedHopscotchTable")
            .field("config", &self.config)
            .field("segments", &self.segments.len())
            .finish_non_exhaustive()
    }
}

impl LockedHopscotchTable {
    /// One segment lock per expected thread, rounded up to a power of two
    /// and capped at one bucket per segment.
    pub fn new(config: TableConfig, concurrency: usize) -> Result<Self, ConfigError> {
        config.validate()?;
        let count = concurrency.max(1).next_power_of_two().min(config.capacity);
        let segments = (0..count)
            .map(|_| {
                CachePadded::new(Segment {
                    lock: AtomicBool::new(false),
                    timestamp: AtomicU64::new(0),
                })
            })
            .collect();
        Ok(LockedHopscotchTable {
            keys: (0..config.capacity).map(|_| AtomicU64::new(NIL)).collect(),
            bitmasks: (0..config.capacity).map(|_| AtomicU64::new(0)).collect(),
            segments,
            segment_shift: (config.capacity / count).trailing_zeros(),
            mask: config.capacity - 1,
            hasher: KeyHasher::new(config.seed, config.capacity),
            config,
        })
    }

    pub fn lock_count(&self) -> usize {
        self.segments.len()
    }

    pub fn config(&self) -> &TableConfig {
        &self.config
    }

    pub fn home_of(&self, key: u64) -> usize {
        self.hasher.home(key)
    }

    fn segment(&self, bucket: usize) -> &Segment {
        &self.segments[bucket >> self.segment_shift]
    }

    fn at(&self, home: usize, offset: usize) -> usize {
        (home + offset) & self.mask
    }

    fn check_key(key: u64) {
        assert!(key != NIL && key != BUSY, "key {key} is reserved");
    }

    /// Offset of `key` in the neighborhood of `home`, if present.
    fn find(&self, home: usize, key: u64) -> Option<usize> {
        let mut bm = self.bitmasks[home].load(SeqCst);
        while bm != 0 {
            let offset = bm.trailing_zeros() as usize;
            if self.keys[self.at(home, offset)].load(SeqCst) == key {
                return Some(offset);
            }
            bm &= bm - 1;
        }
        None
    }

    pub fn contains(&self, key: u64) -> bool {
        Self::check_key(key);
        let home = self.home_of(key);
        let ts = &self.segment(home).timestamp;
        loop {
            let before = ts.load(SeqCst);
            if self.find(home, key).is_some() {
                return true;
            }
            if ts.load(SeqCst) == before {
                return false;
            }
        }
    }

    pub fn remove(&self, key: u64) -> bool {
        Self::check_key(key);
        let home = self.home_of(key);
        let segment = self.segment(home);
        let _guard = segment.lock();
        match self.find(home, key) {
            Some(offset) => {
                self.bitmasks[home].fetch_and(!(1 << offset), SeqCst);
                self.keys[self.at(home, offset)].store(NIL, SeqCst);
                segment.timestamp.fetch_add(1, SeqCst);
                true
            }
            None => false,
        }
    }

    pub fn add(&self, key: u64) -> Result<bool, TableSaturated> {
        Self::check_key(key);
        let home = self.home_of(key);
        let h = self.config.neighborhood;
        let backoff = Backoff::new();
        'retry: loop {
            let home_segment = self.segment(home);
            let _guard = home_segment.lock();
            if self.find(home, key).is_some() {
                return Ok(false);
            }
            let Some((mut rb, mut offset)) = self.claim(home) else {
                return Err(TableSaturated { home });
            };
            while offset >= h {
                match self.move_closer(rb, home_segment) {
                    Step::Moved(i, moved_by) => {
                        rb = i;
                        offset -= moved_by;
                    }
                    Step::Stuck => {
                        self.keys[rb].store(NIL, SeqCst);
                        return Err(TableSaturated { home });
                    }
                    Step::Contended => {
                        self.keys[rb].store(NIL, SeqCst);
                        drop(_guard);
                        backoff.snooze();
                        continue 'retry;
                    }
                }
            }
            self.keys[rb].store(key, SeqCst);
            self.bitmasks[home].fetch_or(1 << offset, SeqCst);
            return Ok(true);
        }
    }

    fn claim(&self, home: usize) -> Option<(usize, usize)> {
        (0..self.config.max_distance).find_map(|offset| {
            let idx = self.at(home, offset);
            self.keys[idx]
                .compare_exchange(NIL, BUSY, SeqCst, SeqCst)
                .is_ok()
                .then_some((idx, offset))
        })
    }

    /// Swaps the claimed bucket `rb` with the furthest-back entry that can
    /// move into it without leaving its neighborhood.
    fn move_closer(&self, rb: usize, held: &Segment) -> Step {
        for dist in (1..self.config.neighborhood).rev() {
            let cb = rb.wrapping_sub(dist) & self.mask;
            let segment = self.segment(cb);
            let _guard = if std::ptr::eq(segment, held) {
                None
            } else {
                match segment.try_lock() {
                    Some(guard) => Some(guard),
                    None => return Step::Contended,
                }
            };
            let bm = self.bitmasks[cb].load(SeqCst) & ((1 << dist) - 1);
            if bm != 0 {
                let lsb = bm.trailing_zeros() as usize;
                let i = self.at(cb, lsb);
                let moved = self.keys[i].load(SeqCst);
                self.keys[rb].store(moved, SeqCst);
                self.bitmasks[cb].fetch_or(1 << dist, SeqCst);
                segment.timestamp.fetch_add(1, SeqCst);
                self.bitmasks[cb].fetch_and(!(1 << lsb), SeqCst);
                self.keys[i].store(BUSY, SeqCst);
                return Step::Moved(i, dist - lsb);
            }
        }
        Step::Stuck
    }

    pub fn snapshot(&self) -> TableSnapshot {
        let buckets = (0..self.keys.len())
            .map(|i| {
                let key = self.keys[i].load(SeqCst);
                let state = match key {
                    NIL => BucketState::Empty,
                    BUSY => BucketState::Busy,
                    _ => BucketState::Member,
                };
                BucketView {
                    key: if key == BUSY { NIL } else { key },
                    state,
                    version: 0,
                    bitmask: self.bitmasks[i].load(SeqCst),
                    reloc: self.segment(i).timestamp.load(SeqCst),
                }
            })
            .collect();
        TableSnapshot {
            neighborhood: self.config.neighborhood,
            hasher: self.hasher,
            buckets,
        }
    }
}

impl ConcurrentSet for LockedHopscotchTable {
    fn contains(&self, key: u64) -> bool {
        LockedHopscotchTable::contains(self, key)
    }

    fn add(&self, key: u64) -> Result<bool, TableSaturated> {
        LockedHopscotchTable::add(self, key)
    }

    fn remove(&self, key: u64) -> bool {
        LockedHopscotchTable::remove(self, key)
    }

    fn capacity(&self) -> usize {
        self.keys.len()
    }

    fn snapshot(&self) -> TableSnapshot {
        LockedHopscotchTable::snapshot(self)
    }
}
