use std::collections::HashSet;
use std::sync::{Arc, Barrier};

use proptest::prelude::*;

use super::*;
use crate::sched::set_yield_percent;

fn key_with_home(table: &HopscotchTable, home: usize, used: &mut HashSet<u64>) -> u64 {
    let key = (1..)
        .find(|&k| table.home_of(k) == home && !used.contains(&k))
        .unwrap();
    used.insert(key);
    key
}

fn small(capacity: usize, h: usize) -> TableConfig {
    TableConfig::with_capacity(capacity)
        .neighborhood(h)
        .max_distance(capacity)
}

/// Places keys with the given homes at the given buckets.
fn layout(config: TableConfig, homes: &[(usize, usize)]) -> (HopscotchTable, Vec<u64>) {
    let probe = HopscotchTable::new(config.clone()).unwrap();
    let mut used = HashSet::new();
    let keys: Vec<u64> = homes
        .iter()
        .map(|&(_, home)| key_with_home(&probe, home, &mut used))
        .collect();
    let entries: Vec<(usize, u64)> = homes
        .iter()
        .map(|&(b, _)| b)
        .zip(keys.iter().copied())
        .collect();
    (HopscotchTable::with_layout(config, &entries).unwrap(), keys)
}

#[test]
fn empty_table_contains_nothing() {
    let t = HopscotchTable::new(small(16, 4)).unwrap();
    assert!((1..100).all(|k| !t.contains(k)));
    assert!(!t.remove(5));
    assert!(t.is_empty());
}

#[test]
fn add_into_free_home_sets_bit_zero() {
    let t = HopscotchTable::new(small(16, 4)).unwrap();
    let home = t.home_of(42);
    assert_eq!(t.add(42), Ok(true));
    let s = t.snapshot();
    assert_eq!(s.buckets[home].key, 42);
    assert_eq!(s.buckets[home].state, BucketState::Member);
    assert_eq!(s.buckets[home].bitmask, 1);
    assert!(t.contains(42));
}

#[test]
fn remove_empties_bucket_and_clears_bit() {
    let t = HopscotchTable::new(small(16, 4)).unwrap();
    let home = t.home_of(42);
    t.add(42).unwrap();
    let before = t.snapshot().buckets[home].version;
    assert!(t.remove(42));
    let b = t.snapshot().buckets[home];
    assert_eq!((b.key, b.state, b.bitmask), (NIL, BucketState::Empty, 0));
    assert!(b.version > before);
    assert!(!t.contains(42));
    assert!(!t.remove(42));
}

#[test]
fn duplicate_add_reports_present() {
    for prescan in [true, false] {
        let t = HopscotchTable::new(small(16, 4).prescan(prescan)).unwrap();
        assert_eq!(t.add(7), Ok(true));
        assert_eq!(t.add(7), Ok(false));
        assert_eq!(t.len(), 1);
    }
}

#[test]
fn uniqueness_check_rejects_existing_member() {
    let (t, keys) = layout(small(16, 4).prescan(false), &[(5, 3)]);
    assert_eq!(t.add(keys[0]), Ok(false));
    let s = t.snapshot();
    assert_eq!(s.members().count(), 1);
    assert!(s.buckets.iter().all(|b| !b.state.is_transient()));
    assert_eq!(s.buckets[3].bitmask, 0b100);
}

#[test]
fn reservation_publish_and_drop() {
    let t = HopscotchTable::new(small(16, 4)).unwrap();
    let key = 99;
    let home = t.home_of(key);
    let r = t.reserve(home, 0).unwrap();
    assert!(t.reserve(home, 0).is_none());
    drop(r);
    assert_eq!(t.snapshot().buckets[home].state, BucketState::Empty);
    let r = t.reserve(home, 0).unwrap();
    assert!(r.publish(key));
    assert!(t.contains(key));
    let r = t.reserve((home + 1) & 15, 1).unwrap();
    assert!(!r.publish(key));
    assert_eq!(t.len(), 1);
    assert!(t.snapshot().buckets.iter().all(|b| !b.state.is_transient()));
}

#[test]
fn displacement_brings_free_bucket_into_neighborhood() {
    // Buckets 2..=6 are full; the neighborhood of 2 is 2..=5. Bucket 5 holds
    // D (home 4), the only entry that can move to the free bucket 7.
    let cfg = small(16, 4).prescan(false);
    let (t, keys) = layout(cfg, &[(2, 2), (3, 3), (4, 1), (5, 4), (6, 6)]);
    let d = keys[3];
    let probe = HopscotchTable::new(t.config().clone()).unwrap();
    let mut used: HashSet<u64> = keys.iter().copied().collect();
    let b = key_with_home(&probe, 2, &mut used);

    assert_eq!(t.add(b), Ok(true));
    let s = t.snapshot();
    assert_eq!(
        (s.buckets[5].key, s.buckets[5].state),
        (b, BucketState::Member)
    );
    assert_eq!(
        (s.buckets[7].key, s.buckets[7].state),
        (d, BucketState::Member)
    );
    assert_eq!(s.buckets[4].bitmask, 1 << 3);
    assert_eq!(s.buckets[2].bitmask, 1 | 1 << 3);
    assert_eq!(s.buckets[4].reloc, 1);
    assert!(keys.iter().chain([&b]).all(|&k| t.contains(k)));
}

#[test]
fn find_closer_bucket_step_by_step() {
    let cfg = small(16, 4);
    let (t, keys) = layout(cfg, &[(4, 1), (5, 4), (6, 6)]);
    let mut r = t.reserve(7, 5).unwrap();
    assert_eq!(r.find_closer_bucket(), (5, 3));
    assert_eq!(r.bucket(), 5);
    // Nothing in 2..=4 can move to 5 now.
    assert_eq!(r.find_closer_bucket(), (5, 3));
    drop(r);
    let s = t.snapshot();
    assert_eq!(s.buckets[7].key, keys[1]);
    assert_eq!(s.buckets[5].state, BucketState::Empty);
    assert!(keys.iter().all(|&k| t.contains(k)));
}

#[test]
fn find_closer_bucket_without_candidates_is_unchanged() {
    // Every occupant of 4..=6 is already at the edge of its neighborhood.
    let (t, _) = layout(small(16, 4), &[(4, 1), (5, 2), (6, 3)]);
    let before = t.snapshot();
    let mut r = t.reserve(7, 4).unwrap();
    assert_eq!(r.find_closer_bucket(), (7, 4));
    let after = t.snapshot();
    for i in 0..16 {
        if i != 7 {
            assert_eq!(before.buckets[i], after.buckets[i]);
        }
    }
}

#[test]
fn add_reports_saturation_and_leaves_table_clean() {
    let t = HopscotchTable::new(small(8, 2).prescan(false)).unwrap();
    let mut added = 0;
    let mut saturated = 0;
    for k in 1..200u64 {
        match t.add(k) {
            Ok(true) => added += 1,
            Ok(false) => unreachable!(),
            Err(TableSaturated { .. }) => saturated += 1,
        }
    }
    assert!(added <= 8 && saturated > 0);
    assert_eq!(t.len(), added);
    assert!(t.snapshot().buckets.iter().all(|b| !b.state.is_transient()));
}

#[test]
fn with_layout_rejects_bad_entries() {
    let probe = HopscotchTable::new(small(16, 4)).unwrap();
    let mut used = HashSet::new();
    let k = key_with_home(&probe, 0, &mut used);
    assert_eq!(
        HopscotchTable::with_layout(small(16, 4), &[(16, k)]).unwrap_err(),
        LayoutError::OutOfRange(16)
    );
    assert_eq!(
        HopscotchTable::with_layout(small(16, 4), &[(0, NIL)]).unwrap_err(),
        LayoutError::BadKey(NIL)
    );
    assert!(matches!(
        HopscotchTable::with_layout(small(16, 4), &[(4, k)]).unwrap_err(),
        LayoutError::OutsideNeighborhood { distance: 4, .. }
    ));
    let k2 = key_with_home(&probe, 0, &mut used);
    assert_eq!(
        HopscotchTable::with_layout(small(16, 4), &[(1, k), (1, k2)]).unwrap_err(),
        LayoutError::Occupied(1)
    );
}

#[test]
fn home_of_is_uniform() {
    let t = HopscotchTable::new(TableConfig::with_capacity(1 << 10)).unwrap();
    let mut counts = vec![0u64; 1 << 10];
    for k in 1..=(1u64 << 20) {
        counts[t.home_of(k)] += 1;
    }
    let expected = (1u64 << 10) as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // Wilson-Hilferty upper 1% point for 1023 degrees of freedom.
    let dof = 1023.0f64;
    let z = 2.326_347_9;
    let a = 2.0 / (9.0 * dof);
    let critical = dof * (1.0 - a + z * a.sqrt()).powi(3);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn same_key_racing_inserts_admit_exactly_one() {
    for round in 0..300u64 {
        let t = Arc::new(HopscotchTable::new(small(16, 4).prescan(round % 2 == 0)).unwrap());
        let barrier = Arc::new(Barrier::new(3));
        let handles: Vec<_> = (0..3)
            .map(|tid| {
                let (t, barrier) = (t.clone(), barrier.clone());
                std::thread::spawn(move || {
                    set_yield_percent(50, round * 7 + tid);
                    barrier.wait();
                    t.add(5).unwrap()
                })
            })
            .collect();
        let wins = handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .filter(|&w| w)
            .count();
        assert_eq!(wins, 1, "round {round}");
        assert_eq!(t.len(), 1);
        assert!(t.snapshot().buckets.iter().all(|b| !b.state.is_transient()));
    }
}

#[test]
fn stalled_reservation_does_not_block_others() {
    let t = HopscotchTable::new(small(64, 8)).unwrap();
    let stalled = t.reserve(t.home_of(1), 0).unwrap();
    for k in 2..40u64 {
        assert_eq!(t.add(k), Ok(true));
        assert!(t.contains(k));
    }
    for k in 2..40u64 {
        assert!(t.remove(k));
    }
    assert!(!t.contains(1));
    drop(stalled);
    assert_eq!(t.add(1), Ok(true));
}

#[test]
fn disjoint_threads_with_displacement() {
    let t = Arc::new(HopscotchTable::new(small(512, 8)).unwrap());
    let handles: Vec<_> = (0..4u64)
        .map(|tid| {
            let t = t.clone();
            std::thread::spawn(move || {
                set_yield_percent(5, tid);
                let keys: Vec<u64> = (0..50).map(|i| 1 + tid + 4 * i).collect();
                for round in 0..20 {
                    for &k in &keys {
                        assert_eq!(t.add(k), Ok(true), "round {round}");
                    }
                    for &k in &keys {
                        assert!(t.contains(k));
                    }
                    for &k in &keys {
                        assert!(t.remove(k));
                    }
                }
                for &k in &keys {
                    t.add(k).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(t.len(), 200);
    let s = t.snapshot();
    assert!(s.buckets.iter().all(|b| !b.state.is_transient()));
    for (i, b) in s.buckets.iter().enumerate() {
        if b.state == BucketState::Member {
            let home = s.home(b.key);
            assert!(s.distance(home, i) < 8);
            assert_ne!(s.buckets[home].bitmask & 1 << s.distance(home, i), 0);
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Add(u64),
    Remove(u64),
    Contains(u64),
}

fn op() -> impl Strategy<Value = Op> {
    (0..3u8, 1..40u64).prop_map(|(kind, k)| match kind {
        0 => Op::Add(k),
        1 => Op::Remove(k),
        _ => Op::Contains(k),
    })
}

proptest! {
    #[test]
    fn serial_replay_matches_hash_set(ops in prop::collection::vec(op(), 1..200), prescan: bool) {
        let t = HopscotchTable::new(small(32, 4).prescan(prescan)).unwrap();
        let mut model = HashSet::new();
        for op in ops {
            match op {
                Op::Add(k) => match t.add(k) {
                    Ok(added) => prop_assert_eq!(added, model.insert(k)),
                    Err(_) => prop_assert!(!model.contains(&k)),
                },
                Op::Remove(k) => prop_assert_eq!(t.remove(k), model.remove(&k)),
                Op::Contains(k) => prop_assert_eq!(t.contains(k), model.contains(&k)),
            }
        }
        prop_assert_eq!(t.len(), model.len());
    }
}
