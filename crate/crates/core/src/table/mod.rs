//! Lock-free Hopscotch hashing set.
//!
//! Buckets follow a small state machine (`Empty`, `Busy`, `Inserting`,
//! `Member`, `Collided`) packed with a version into one K-CAS word. Every
//! home bucket carries an `H`-bit neighborhood mask (bit `i` set means bucket
//! `home + i` may hold one of its keys) and a relocation counter that is
//! bumped whenever one of its entries moves.
//!
//! Insertion is eager: a thread claims an empty bucket by linear probing,
//! walks it back into the neighborhood by swapping it with movable members
//! (one 3-word K-CAS per hop: both bucket states and the mover's relocation
//! counter), writes its key, publishes it as `Inserting` and finally runs a
//! uniqueness check over the neighborhood before committing it as `Member`.
//! Readers snapshot the relocation counter, scan the mask, and retry when the
//! counter changed under them.
//!
//! Versions bump on every claim and release and on every member that is
//! displaced out of its bucket, so a `(version, Member)` word identifies one
//! membership period of one key. Readers rely on that to validate a key read
//! by re-reading the state word.

mod config;
mod state;

pub use config::{
    ConfigError, TableConfig, DEFAULT_MAX_DISTANCE, DEFAULT_NEIGHBORHOOD, DEFAULT_SEED,
};
pub use state::{BucketState, VersionedState};

use std::fmt;
use std::sync::atomic::AtomicU64;
use std::sync::atomic::Ordering::SeqCst;

use thiserror::Error;

use crate::hash::KeyHasher;
use crate::kcas::{KcasDomain, KcasWord};
use crate::sched::yield_point;
use crate::set::{ConcurrentSet, TableSaturated, NIL};
use crate::snapshot::{BucketView, TableSnapshot};

#[repr(align(32))]
struct Bucket {
    key: AtomicU64,
    vs: KcasWord,
    bm: AtomicU64,
    rc: KcasWord,
}

impl Bucket {
    fn new() -> Self {
        Bucket {
            key: AtomicU64::new(NIL),
            vs: KcasWord::new(VersionedState::new(0, BucketState::Empty).pack()),
            bm: AtomicU64::new(0),
            rc: KcasWord::new(0),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bucket {0} is out of range")]
    OutOfRange(usize),
    #[error("bucket {0} is listed twice")]
    Occupied(usize),
    #[error("key {0} is nil or listed twice")]
    BadKey(u64),
    #[error("key {key} at bucket {bucket} is {distance} buckets from its home, neighborhood is {neighborhood}")]
    OutsideNeighborhood {
        key: u64,
        bucket: usize,
        distance: usize,
        neighborhood: usize,
    },
}

/// Lock-free Hopscotch hashing set of non-zero `u64` keys.
pub struct HopscotchTable {
    buckets: Box<[Bucket]>,
    mask: usize,
    config: TableConfig,
    hasher: KeyHasher,
    domain: KcasDomain,
}

impl fmt::Debug for HopscotchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HopscotchTable")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

enum Outcome {
    Member,
    Collided,
}

impl HopscotchTable {
    pub fn new(config: TableConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let buckets = (0..config.capacity).map(|_| Bucket::new()).collect();
        Ok(HopscotchTable {
            buckets,
            mask: config.capacity - 1,
            hasher: KeyHasher::new(config.seed, config.capacity),
            config,
            domain: KcasDomain::new(),
        })
    }

    /// Builds a quiescent table with each `(bucket, key)` already a member.
    pub fn with_layout(config: TableConfig, entries: &[(usize, u64)]) -> Result<Self, LayoutError> {
        let table = HopscotchTable::new(config)?;
        let mut keys = std::collections::HashSet::new();
        for &(bucket, key) in entries {
            if bucket >= table.buckets.len() {
                return Err(LayoutError::OutOfRange(bucket));
            }
            if key == NIL || !keys.insert(key) {
                return Err(LayoutError::BadKey(key));
            }
            let b = &table.buckets[bucket];
            if b.key.load(SeqCst) != NIL {
                return Err(LayoutError::Occupied(bucket));
            }
            let home = table.home_of(key);
            let distance = table.distance(home, bucket);
            if distance >= table.config.neighborhood {
                return Err(LayoutError::OutsideNeighborhood {
                    key,
                    bucket,
                    distance,
                    neighborhood: table.config.neighborhood,
                });
            }
            b.key.store(key, SeqCst);
            table
                .domain
                .store(&b.vs, VersionedState::new(1, BucketState::Member).pack());
            table.buckets[home].bm.fetch_or(1 << distance, SeqCst);
        }
        Ok(table)
    }

    pub fn config(&self) -> &TableConfig {
        &self.config
    }

    pub fn home_of(&self, key: u64) -> usize {
        self.hasher.home(key)
    }

    #[inline]
    fn at(&self, home: usize, offset: usize) -> usize {
        (home + offset) & self.mask
    }

    #[inline]
    fn distance(&self, from: usize, to: usize) -> usize {
        to.wrapping_sub(from) & self.mask
    }

    #[inline]
    fn read_vs(&self, idx: usize) -> VersionedState {
        VersionedState::unpack(self.domain.read(&self.buckets[idx].vs))
    }

    #[inline]
    fn cas_vs(&self, idx: usize, current: VersionedState, new: VersionedState) -> bool {
        self.domain
            .compare_exchange(&self.buckets[idx].vs, current.pack(), new.pack())
            .is_ok()
    }

    /// Transition of a bucket the caller owns; nobody else may change it.
    #[inline]
    fn set_owned(&self, idx: usize, current: VersionedState, new: VersionedState) {
        let ok = self.cas_vs(idx, current, new);
        debug_assert!(
            ok,
            "owned bucket {idx} changed under its owner: expected {current:?}"
        );
    }

    #[inline]
    fn read_rc(&self, idx: usize) -> u64 {
        self.domain.read(&self.buckets[idx].rc)
    }

    /// `Some(state)` if bucket `idx` is a member holding `key`, validated
    /// against a concurrent change of the bucket.
    #[inline]
    fn member_with_key(&self, idx: usize, key: u64) -> Option<VersionedState> {
        let vs = self.read_vs(idx);
        if vs.state != BucketState::Member {
            return None;
        }
        let found = self.buckets[idx].key.load(SeqCst);
        yield_point();
        (found == key && self.read_vs(idx) == vs).then_some(vs)
    }

    pub fn contains(&self, key: u64) -> bool {
        assert_ne!(key, NIL, "nil is not a valid key");
        let home = self.home_of(key);
        let mut rc_before = self.read_rc(home);
        loop {
            let mut bm = self.buckets[home].bm.load(SeqCst);
            while bm != 0 {
                let idx = self.at(home, bm.trailing_zeros() as usize);
                if self.member_with_key(idx, key).is_some() {
                    return true;
                }
                bm &= bm - 1;
            }
            yield_point();
            let rc_after = self.read_rc(home);
            if rc_after == rc_before {
                return false;
            }
            rc_before = rc_after;
        }
    }

    pub fn remove(&self, key: u64) -> bool {
        assert_ne!(key, NIL, "nil is not a valid key");
        let home = self.home_of(key);
        let mut rc_before = self.read_rc(home);
        loop {
            let mut bm = self.buckets[home].bm.load(SeqCst);
            while bm != 0 {
                let offset = bm.trailing_zeros() as usize;
                let idx = self.at(home, offset);
                loop {
                    let vs = self.read_vs(idx);
                    if vs.state != BucketState::Member || self.buckets[idx].key.load(SeqCst) != key
                    {
                        break;
                    }
                    yield_point();
                    // The state CAS also validates the key read: a member
                    // keeps its key for the whole (version, Member) period.
                    if self.cas_vs(idx, vs, vs.with_state(BucketState::Busy)) {
                        yield_point();
                        self.buckets[idx].key.store(NIL, SeqCst);
                        self.buckets[home].bm.fetch_and(!(1 << offset), SeqCst);
                        self.set_owned(
                            idx,
                            vs.with_state(BucketState::Busy),
                            vs.bumped(BucketState::Empty),
                        );
                        return true;
                    }
                }
                bm &= bm - 1;
            }
            yield_point();
            let rc_after = self.read_rc(home);
            if rc_after == rc_before {
                return false;
            }
            rc_before = rc_after;
        }
    }

    pub fn add(&self, key: u64) -> Result<bool, TableSaturated> {
        assert_ne!(key, NIL, "nil is not a valid key");
        let home = self.home_of(key);
        loop {
            if self.config.prescan && self.contains(key) {
                return Ok(false);
            }
            let Some(mut reservation) = self.claim(home) else {
                return self.saturated(key, home);
            };
            while reservation.offset >= self.config.neighborhood {
                let before = reservation.bucket;
                reservation.find_closer_bucket();
                if reservation.bucket == before {
                    drop(reservation);
                    return self.saturated(key, home);
                }
            }
            match self.publish(reservation, key) {
                Outcome::Member => return Ok(true),
                // Lost the uniqueness check. Report "present" only if the key
                // can be observed now; otherwise the winner went away and we
                // try again.
                Outcome::Collided => {
                    if self.contains(key) {
                        return Ok(false);
                    }
                }
            }
        }
    }

    /// No room for `key`. A present key still makes `add` a no-op success.
    fn saturated(&self, key: u64, home: usize) -> Result<bool, TableSaturated> {
        if self.contains(key) {
            Ok(false)
        } else {
            Err(TableSaturated { home })
        }
    }

    /// Claims the first empty bucket within `max_distance` of `home`.
    fn claim(&self, home: usize) -> Option<Reservation<'_>> {
        for offset in 0..self.config.max_distance {
            let idx = self.at(home, offset);
            loop {
                let vs = self.read_vs(idx);
                if vs.state != BucketState::Empty {
                    break;
                }
                let busy = vs.bumped(BucketState::Busy);
                if self.cas_vs(idx, vs, busy) {
                    yield_point();
                    return Some(Reservation {
                        table: self,
                        bucket: idx,
                        version: busy.version,
                        offset,
                    });
                }
            }
        }
        None
    }

    /// Claims bucket `bucket` if it is empty. `offset` is its distance from
    /// the home bucket of the key it will eventually hold.
    pub fn reserve(&self, bucket: usize, offset: usize) -> Option<Reservation<'_>> {
        let vs = self.read_vs(bucket);
        let busy = vs.bumped(BucketState::Busy);
        (vs.state == BucketState::Empty && self.cas_vs(bucket, vs, busy)).then(|| Reservation {
            table: self,
            bucket,
            version: busy.version,
            offset,
        })
    }

    /// Writes `key` into the reserved bucket, makes it visible in the home
    /// neighborhood and runs the uniqueness check.
    fn publish(&self, reservation: Reservation<'_>, key: u64) -> Outcome {
        let (idx, version, offset) = (reservation.bucket, reservation.version, reservation.offset);
        std::mem::forget(reservation);
        let home = self.home_of(key);
        debug_assert_eq!(self.distance(home, idx), offset);
        debug_assert!(offset < self.config.neighborhood);
        let busy = VersionedState::new(version, BucketState::Busy);
        let inserting = busy.with_state(BucketState::Inserting);
        self.buckets[idx].key.store(key, SeqCst);
        // The bit goes up first: a helper may commit the bucket as soon as it
        // is Inserting, and a member must already be reachable from home.
        self.buckets[home].bm.fetch_or(1 << offset, SeqCst);
        yield_point();
        self.set_owned(idx, busy, inserting);
        yield_point();
        self.uniqueness_check(key, home, idx, version);
        // Only the owner leaves Collided. Any other state means the bucket
        // was committed, and may since have been removed or displaced.
        let collided = inserting.with_state(BucketState::Collided);
        if self.read_vs(idx) != collided {
            return Outcome::Member;
        }
        self.set_owned(idx, collided, busy);
        self.buckets[idx].key.store(NIL, SeqCst);
        self.buckets[home].bm.fetch_and(!(1 << offset), SeqCst);
        self.set_owned(idx, busy, busy.bumped(BucketState::Empty));
        Outcome::Collided
    }

    /// Decides whether the `Inserting` bucket `idx` (holding `key`, version
    /// `version`) becomes a `Member` or `Collided`.
    ///
    /// Among concurrent inserters of the same key the bucket closest to home
    /// wins. A loser marks itself collided and then drives the winner's
    /// check to completion, so it never reports the key as present before the
    /// winner is. Any other thread may resolve a bucket's fate; the owner
    /// learns it by reading the state afterwards.
    fn uniqueness_check(&self, key: u64, home: usize, mut idx: usize, mut version: u64) {
        'restart: loop {
            let inserting = VersionedState::new(version, BucketState::Inserting);
            if self.read_vs(idx) != inserting {
                return;
            }
            let my_offset = self.distance(home, idx);
            let rc_before = self.read_rc(home);
            let mut bm = self.buckets[home].bm.load(SeqCst);
            while bm != 0 {
                let offset = bm.trailing_zeros() as usize;
                bm &= bm - 1;
                let other = self.at(home, offset);
                if other == idx {
                    continue;
                }
                let vs = self.read_vs(other);
                if vs.state == BucketState::Inserting && self.buckets[other].key.load(SeqCst) == key
                {
                    yield_point();
                    if offset < my_offset {
                        if self.read_vs(other) == vs {
                            self.cas_vs(
                                idx,
                                inserting,
                                inserting.with_state(BucketState::Collided),
                            );
                            idx = other;
                            version = vs.version;
                            continue 'restart;
                        }
                    } else {
                        self.cas_vs(other, vs, vs.with_state(BucketState::Collided));
                    }
                }
                if self.member_with_key(other, key).is_some() {
                    self.cas_vs(idx, inserting, inserting.with_state(BucketState::Collided));
                    return;
                }
            }
            yield_point();
            if self.read_rc(home) != rc_before {
                continue 'restart;
            }
            self.cas_vs(idx, inserting, inserting.with_state(BucketState::Member));
            return;
        }
    }

    /// Number of members, by full scan.
    pub fn len(&self) -> usize {
        (0..self.buckets.len())
            .filter(|&i| self.read_vs(i).state == BucketState::Member)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.buckets.len()
    }

    /// Bucket-level copy of the table. Consistent only at quiescence.
    pub fn snapshot(&self) -> TableSnapshot {
        let buckets = self
            .buckets
            .iter()
            .map(|b| {
                let vs = VersionedState::unpack(self.domain.read(&b.vs));
                BucketView {
                    key: b.key.load(SeqCst),
                    state: vs.state,
                    version: vs.version,
                    bitmask: b.bm.load(SeqCst),
                    reloc: self.domain.read(&b.rc),
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

/// Ownership of a `Busy` bucket. Dropping it returns the bucket to `Empty`.
pub struct Reservation<'t> {
    table: &'t HopscotchTable,
    bucket: usize,
    version: u64,
    offset: usize,
}

impl fmt::Debug for Reservation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reservation")
            .field("bucket", &self.bucket)
            .field("version", &self.version)
            .field("offset", &self.offset)
            .finish()
    }
}

impl Reservation<'_> {
    pub fn bucket(&self) -> usize {
        self.bucket
    }

    /// Distance from the inserting key's home bucket.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Publishes `key` in the reserved bucket and runs the uniqueness check.
    /// `false` means another copy of the key won and the bucket was released.
    ///
    /// Panics if the bucket is not within the neighborhood of `key`'s home.
    pub fn publish(self, key: u64) -> bool {
        assert_ne!(key, NIL, "nil is not a valid key");
        let t = self.table;
        let distance = t.distance(t.home_of(key), self.bucket);
        assert!(
            distance == self.offset && distance < t.config.neighborhood,
            "bucket {} is not at offset {} of key {key}'s neighborhood",
            self.bucket,
            self.offset
        );
        matches!(t.publish(self, key), Outcome::Member)
    }

    /// Moves the reserved bucket closer to home by swapping it with a member
    /// that stays inside its own neighborhood.
    ///
    /// Candidates are scanned from the bucket `H - 1` positions back, so the
    /// first legal move is also the longest one. On success the member now
    /// sits in the old reserved bucket and this reservation owns the bucket
    /// it vacated. Returns the new `(bucket, offset)`, unchanged when no move
    /// was possible.
    pub fn find_closer_bucket(&mut self) -> (usize, usize) {
        let t = self.table;
        let rb = self.bucket;
        let h = t.config.neighborhood;
        let busy = VersionedState::new(self.version, BucketState::Busy);
        'begin: loop {
            for dist in (1..h).rev() {
                let cb = rb.wrapping_sub(dist) & t.mask;
                let rc_before = t.read_rc(cb);
                let mut bm = t.buckets[cb].bm.load(SeqCst);
                while bm != 0 {
                    let lsb = bm.trailing_zeros() as usize;
                    if lsb >= dist {
                        break;
                    }
                    let i = t.at(cb, lsb);
                    let ivs = t.read_vs(i);
                    if ivs.state == BucketState::Member {
                        let moved = t.buckets[i].key.load(SeqCst);
                        // Stale mask bits may point at a member of another home.
                        if moved != NIL && t.home_of(moved) == cb {
                            t.buckets[rb].key.store(moved, SeqCst);
                            t.buckets[cb].bm.fetch_or(1 << dist, SeqCst);
                            yield_point();
                            let mut desc = t.domain.descriptor();
                            // SAFETY: all three words belong to `t`, which owns
                            // the domain.
                            unsafe {
                                desc.push(&t.buckets[cb].rc, rc_before, rc_before + 1);
                                desc.push(
                                    &t.buckets[i].vs,
                                    ivs.pack(),
                                    ivs.bumped(BucketState::Busy).pack(),
                                );
                                desc.push(
                                    &t.buckets[rb].vs,
                                    busy.pack(),
                                    busy.with_state(BucketState::Member).pack(),
                                );
                            }
                            if !desc.execute() {
                                t.buckets[cb].bm.fetch_and(!(1 << dist), SeqCst);
                                yield_point();
                                continue 'begin;
                            }
                            t.buckets[cb].bm.fetch_and(!(1 << lsb), SeqCst);
                            self.bucket = i;
                            self.version = ivs.bumped(BucketState::Busy).version;
                            self.offset -= dist - lsb;
                            return (self.bucket, self.offset);
                        }
                    }
                    bm &= bm - 1;
                }
                if t.read_rc(cb) != rc_before {
                    continue 'begin;
                }
            }
            return (rb, self.offset);
        }
    }
}

impl Drop for Reservation<'_> {
    fn drop(&mut self) {
        let busy = VersionedState::new(self.version, BucketState::Busy);
        // A bucket vacated by a displacement still holds the moved key.
        self.table.buckets[self.bucket].key.store(NIL, SeqCst);
        self.table
            .set_owned(self.bucket, busy, busy.bumped(BucketState::Empty));
    }
}

impl ConcurrentSet for HopscotchTable {
    fn contains(&self, key: u64) -> bool {
        HopscotchTable::contains(self, key)
    }

    fn add(&self, key: u64) -> Result<bool, TableSaturated> {
        HopscotchTable::add(self, key)
    }

    fn remove(&self, key: u64) -> bool {
        HopscotchTable::remove(self, key)
    }

    fn capacity(&self) -> usize {
        self.buckets.len()
    }

    fn snapshot(&self) -> TableSnapshot {
        HopscotchTable::snapshot(self)
    }

    fn len(&self) -> usize {
        HopscotchTable::len(self)
    }
}

#[cfg(test)]
mod tests;
