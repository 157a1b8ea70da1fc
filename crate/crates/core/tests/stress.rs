use std::collections::HashSet;
use std::process::Command;
use std::sync::Barrier;
use std::time::{Duration, Instant};

use lockfree_hopscotch::baselines::LockedHopscotchTable;
use lockfree_hopscotch::checker::micro::{run_micro, MicroConfig};
use lockfree_hopscotch::checker::{check_linearizable, ledger_audit, structural_audit};
use lockfree_hopscotch::harness::{read_csv, run_stress, StressConfig, TableKind, CSV_HEADER};
use lockfree_hopscotch::sched::set_yield_percent;
use lockfree_hopscotch::table::BucketState;
use lockfree_hopscotch::{HopscotchTable, TableConfig};

fn stress(
    table: TableKind,
    threads: usize,
    capacity: usize,
    keyspace: u64,
    seed: u64,
) -> StressConfig {
    StressConfig {
        table,
        capacity,
        keyspace,
        threads,
        total_ops: 200_000,
        update_pct: 50,
        seed,
        yield_percent: 2,
    }
}

#[test]
fn eight_thread_stress_keeps_ledger_and_structure() {
    for table in [TableKind::HsLockfree, TableKind::HsLocked] {
        for (capacity, keyspace) in [(1 << 10, 1 << 8), (64, 48), (1 << 12, 1 << 12)] {
            let report =
                run_stress(&stress(table, 8, capacity, keyspace, capacity as u64)).unwrap();
            assert!(report.is_clean(), "{table} cap {capacity}: {report:?}");
        }
    }
}

#[test]
fn few_hot_keys_under_heavy_yields_stay_unique() {
    for table in [TableKind::HsLockfree, TableKind::HsLocked] {
        for seed in 0..300 {
            let cfg = StressConfig {
                total_ops: 20_000,
                yield_percent: 20,
                ..stress(table, 8, 1 << 10, 4, seed)
            };
            let report = run_stress(&cfg).unwrap();
            assert!(report.is_clean(), "{table} seed {seed}: {report:?}");
        }
    }
}

#[test]
fn locked_table_histories_are_linearizable() {
    let cfg = MicroConfig::default();
    for seed in 0..2000 {
        let run = run_micro(&cfg, seed, |c| LockedHopscotchTable::new(c, 4).unwrap());
        assert!(
            check_linearizable(&run.history).unwrap().is_linearizable(),
            "seed {seed}\n{}",
            run.history
        );
        assert!(ledger_audit(&run.history, &run.final_members()).is_empty());
        assert!(structural_audit(&run.snapshot).is_empty());
    }
}

#[test]
fn displacement_heavy_neighborhoods() {
    // Small H and high load force long displacement chains under contention.
    let t = HopscotchTable::new(TableConfig::with_capacity(256).neighborhood(8)).unwrap();
    let barrier = Barrier::new(4);
    std::thread::scope(|s| {
        for tid in 0..4u64 {
            let (t, barrier) = (&t, &barrier);
            s.spawn(move || {
                set_yield_percent(10, tid);
                barrier.wait();
                for round in 0..50u64 {
                    let keys: Vec<u64> = (0..40)
                        .map(|i| 1 + tid + 4 * (i + 40 * (round % 3)))
                        .collect();
                    for &k in &keys {
                        assert_eq!(t.add(k), Ok(true));
                    }
                    for &k in &keys {
                        assert!(t.contains(k), "lost {k}");
                    }
                    for &k in &keys {
                        assert!(t.remove(k));
                    }
                }
            });
        }
    });
    assert!(t.is_empty());
    assert!(structural_audit(&t.snapshot()).is_empty());
}

#[test]
fn stalled_inserter_outside_neighborhoods_does_not_block_others() {
    let h = 8;
    let t = HopscotchTable::new(TableConfig::with_capacity(1024).neighborhood(h)).unwrap();
    let stalled_bucket = 512;
    let stalled = t.reserve(stalled_bucket, 0).unwrap();
    // Keys whose neighborhoods stay clear of the stalled bucket.
    let keys: Vec<u64> = (1..)
        .filter(|&k| {
            let d = stalled_bucket.wrapping_sub(t.home_of(k)) & 1023;
            d >= 2 * h && 1024 - d >= 2 * h
        })
        .take(300)
        .collect();
    let start = Instant::now();
    std::thread::scope(|s| {
        for chunk in keys.chunks(75) {
            let t = &t;
            s.spawn(move || {
                for _ in 0..20 {
                    for &k in chunk {
                        assert_eq!(t.add(k), Ok(true));
                    }
                    for &k in chunk {
                        assert!(t.contains(k));
                        assert!(t.remove(k));
                    }
                }
            });
        }
    });
    assert!(start.elapsed() < Duration::from_secs(20));
    assert_eq!(
        t.snapshot().buckets[stalled_bucket].state,
        BucketState::Busy
    );
    drop(stalled);
    assert!(structural_audit(&t.snapshot()).is_empty());
}

#[test]
fn prefilled_table_survives_concurrent_churn() {
    let t = HopscotchTable::new(TableConfig::with_capacity(1 << 12).neighborhood(16)).unwrap();
    let initial: HashSet<u64> = (1..=3000).collect();
    for &k in &initial {
        t.add(k).unwrap();
    }
    std::thread::scope(|s| {
        for tid in 0..4u64 {
            let t = &t;
            s.spawn(move || {
                set_yield_percent(1, tid);
                for round in 0..20 {
                    for k in (3001 + tid * 50..3001 + (tid + 1) * 50).filter(|k| k % 2 == round % 2)
                    {
                        let _ = t.add(k);
                        t.remove(k);
                    }
                }
            });
        }
    });
    let members: HashSet<u64> = t.snapshot().members().collect();
    assert_eq!(members, initial);
    assert!(initial.iter().all(|&k| t.contains(k)));
}

#[test]
fn cli_modes_run_and_write_csv() {
    let bin = env!("CARGO_BIN_EXE_hopscotch-bench");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    for table in ["hs-lockfree", "hs-locked"] {
        let out = Command::new(bin)
            .args([
                "--table",
                table,
                "--capacity-log2",
                "14",
                "--threads",
                "2",
                "--duration-secs",
                "0.1",
            ])
            .args([
                "--reps",
                "2",
                "--read-pct",
                "60",
                "--load-factor",
                "0.8",
                "--csv",
            ])
            .arg(&csv)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter()
            .filter(|r| r.table == TableKind::HsLocked)
            .count(),
        2
    );
    assert!(rows
        .iter()
        .all(|r| r.total_ops > 0 && r.threads == 2 && r.read_pct == 60));

    for mode in [
        ["--mode", "stress", "--capacity-log2", "10"],
        ["--mode", "audit", "--histories", "200"],
    ] {
        let out = Command::new(bin)
            .args(mode)
            .args(["--threads", "3", "--ops", "50000"])
            .output()
            .unwrap();
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{mode:?}: {stdout}");
    }

    let bad = Command::new(bin)
        .args(["--load-factor", "1.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
