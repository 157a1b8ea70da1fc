use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};

use lockfree_hopscotch::baselines::LockedHopscotchTable;
use lockfree_hopscotch::checker::micro::{run_micro, MicroConfig, MicroRun};
use lockfree_hopscotch::checker::{
    check_linearizable, ledger_audit, structural_audit, to_json_lines, Verdict,
};
use lockfree_hopscotch::harness::{
    emit_csv, run_repetition, run_stress, BenchResult, StressConfig, TableKind, WorkloadConfig,
};
use lockfree_hopscotch::HopscotchTable;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Timed throughput runs.
    Bench,
    /// Recorded random workload followed by ledger and structural audits.
    Stress,
    /// Small concurrent histories checked for linearizability.
    Audit,
}

#[derive(Debug, Parser)]
#[command(about = "Throughput benchmark and correctness audits for concurrent Hopscotch tables")]
struct Args {
    #[arg(long, value_enum, default_value_t = TableKind::HsLockfree)]
    table: TableKind,
    #[arg(long, default_value_t = 20)]
    capacity_log2: u32,
    #[arg(long, default_value_t = 0.6)]
    load_factor: f64,
    /// Percentage of contains operations.
    #[arg(long, default_value_t = 90)]
    read_pct: u32,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 2.0)]
    duration_secs: f64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Append one row per repetition to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Bench)]
    mode: Mode,
    /// Stress: total operations across threads.
    #[arg(long, default_value_t = 1_000_000)]
    ops: usize,
    /// Stress: keys are drawn from 1..=keyspace (default: a quarter of capacity).
    #[arg(long)]
    keyspace: Option<u64>,
    /// Audit: number of histories.
    #[arg(long, default_value_t = 10_000)]
    histories: u64,
    /// Print violations as JSON lines instead of text.
    #[arg(long)]
    json: bool,
}

fn bench(args: &Args) -> Result<bool, Box<dyn std::error::Error>> {
    let cfg = WorkloadConfig {
        table: args.table,
        capacity_log2: args.capacity_log2,
        load_factor: args.load_factor,
        read_pct: args.read_pct,
        threads: args.threads,
        duration: Duration::from_secs_f64(args.duration_secs),
        reps: args.reps,
        seed: args.seed,
    };
    cfg.validate()?;
    let mut reps = Vec::with_capacity(cfg.reps);
    let mut ok = true;
    for rep in 0..cfg.reps {
        let r = run_repetition(&cfg, rep)?;
        let occupancy = r.occupancy_ok(cfg.load_factor);
        ok &= occupancy && r.start_barrier_ok;
        println!(
            "{} threads={} lf={} read={}% rep={} ops={} ops/us={:.3} load={:.4}{}",
            cfg.table,
            cfg.threads,
            cfg.load_factor,
            cfg.read_pct,
            rep,
            r.total_ops,
            r.ops_per_usec,
            r.measured_load,
            if occupancy {
                ""
            } else {
                " (occupancy drifted)"
            }
        );
        reps.push(r);
    }
    let result = BenchResult { config: cfg, reps };
    println!("mean ops/us = {:.3}", result.mean_ops_per_usec());
    if let Some(path) = &args.csv {
        emit_csv(path, &[result])?;
    }
    Ok(ok)
}

fn stress(args: &Args) -> Result<bool, Box<dyn std::error::Error>> {
    let capacity = 1usize << args.capacity_log2;
    let cfg = StressConfig {
        table: args.table,
        capacity,
        keyspace: args.keyspace.unwrap_or(capacity as u64 / 4),
        threads: args.threads,
        total_ops: args.ops,
        update_pct: 100 - args.read_pct.min(100),
        seed: args.seed,
        yield_percent: 0,
    };
    let report = run_stress(&cfg)?;
    if args.json {
        print!(
            "{}{}",
            to_json_lines(&report.ledger),
            to_json_lines(&report.structural)
        );
    } else {
        for v in &report.ledger {
            println!("ledger: {v}");
        }
        for v in &report.structural {
            println!("structure: {v}");
        }
        println!(
            "{} operations, {} saturated adds, {} ledger and {} structural violations",
            report.operations,
            report.saturated,
            report.ledger.len(),
            report.structural.len()
        );
    }
    Ok(report.is_clean())
}

fn audit(args: &Args) -> Result<bool, Box<dyn std::error::Error>> {
    let cfg = MicroConfig::default();
    let mut failures = 0u64;
    for i in 0..args.histories {
        let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(i);
        let run: MicroRun = match args.table {
            TableKind::HsLockfree => run_micro(&cfg, seed, |c| {
                HopscotchTable::new(c).expect("valid micro config")
            }),
            TableKind::HsLocked => run_micro(&cfg, seed, |c| {
                LockedHopscotchTable::new(c, cfg.max_threads).expect("valid micro config")
            }),
        };
        let verdict = check_linearizable(&run.history)?;
        let ledger = ledger_audit(&run.history, &run.final_members());
        let structure = structural_audit(&run.snapshot);
        if !verdict.is_linearizable() || !ledger.is_empty() || !structure.is_empty() {
            failures += 1;
        }
        if let Verdict::NotLinearizable(v) = &verdict {
            if args.json {
                print!("{}", to_json_lines(std::slice::from_ref(v)));
            } else {
                println!("seed {seed}: {v}");
            }
        }
        if args.json {
            print!("{}{}", to_json_lines(&ledger), to_json_lines(&structure));
        } else {
            for v in &ledger {
                println!("seed {seed}: ledger: {v}");
            }
            for v in &structure {
                println!("seed {seed}: structure: {v}");
            }
        }
    }
    if !args.json {
        println!("{} histories, {failures} failing", args.histories);
    }
    Ok(failures == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let outcome = match args.mode {
        Mode::Bench => bench(&args),
        Mode::Stress => stress(&args),
        Mode::Audit => audit(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
