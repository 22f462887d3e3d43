use std::fs::File;
use std::io::{self, Write};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use threadcache::RuntimeConfig;
use threadcache_bench::{run_sweep, BenchConfig, Mode, Workload, DEFAULT_CUTOFF, DEFAULT_KEYS};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WorkloadArg {
    Spawn,
    Deferred,
    Forkjoin,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Default,
    Cached,
    Both,
}

/// Thread creation throughput benchmarks, with and without thread caching.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    #[arg(long, value_enum, default_value = "spawn")]
    workload: WorkloadArg,
    /// Concurrent creator threads (ignored when --sweep is given).
    #[arg(long, default_value_t = 1)]
    creators: usize,
    /// Measurement interval per run, in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Repetitions per point; must be odd.
    #[arg(long, default_value_t = 7)]
    runs: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Comma-separated creator counts, e.g. 1,2,4,8.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Busy-work per child, in nanoseconds.
    #[arg(long, default_value_t = 0)]
    spin_ns: u64,
    /// Keys sorted by the forkjoin workload.
    #[arg(long, default_value_t = DEFAULT_KEYS)]
    keys: usize,
    /// Forkjoin subproblem size below which no thread is spawned.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> Result<bool> {
    if args.duration.is_nan() || args.duration <= 0.0 {
        bail!("--duration must be positive");
    }
    let cfg = BenchConfig {
        workload: match args.workload {
            WorkloadArg::Spawn => Workload::Spawn,
            WorkloadArg::Deferred => Workload::Deferred,
            WorkloadArg::Forkjoin => Workload::Forkjoin,
        },
        creators: args.creators,
        duration: Duration::from_secs_f64(args.duration),
        runs: args.runs,
        seed: args.seed,
        spin_ns: args.spin_ns,
        keys: args.keys,
        cutoff: args.cutoff,
        cached: RuntimeConfig::from_env().context("reading THREADCACHE* settings")?,
    };
    cfg.validate()?;
    let modes: &[Mode] = match args.mode {
        ModeArg::Default => &[Mode::Default],
        ModeArg::Cached => &[Mode::Cached],
        ModeArg::Both => &[Mode::Default, Mode::Cached],
    };
    let sweep = if args.sweep.is_empty() {
        vec![args.creators]
    } else {
        args.sweep.clone()
    };
    let out: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let points = run_sweep(&cfg, modes, &sweep, out)?;

    let mut ok = true;
    for p in &points {
        eprintln!("{} {:>7} creators={:<3} median {:.1} {}", cfg.workload, p.mode, p.creators, p.median, cfg.workload.unit());
        for f in &p.failures {
            eprintln!("  gate failed: {f}");
            ok = false;
        }
    }
    if modes.len() == 2 {
        for pair in points.chunks(2) {
            let (d, c) = (&pair[0], &pair[1]);
            let speedup = match cfg.workload {
                Workload::Forkjoin => d.median / c.median,
                _ => c.median / d.median,
            };
            eprintln!("creators={:<3} cached/default speedup {speedup:.2}x", d.creators);
        }
    }
    Ok(ok)
}
