//! Thread creation benchmarks for the `threadcache` runtime.
//!
//! Three workloads compare a caching runtime against one that creates a
//! physical thread for every spawn:
//!
//! * `spawn`: each creator loops spawning a child and joining it.
//! * `deferred`: like `spawn`, but the child is wrapped in a [`Deferred`]
//!   that only materializes a thread when its result is demanded.
//! * `forkjoin`: a recursive merge sort that spawns a logical thread per
//!   subproblem above a cutoff.
//!
//! [`run_sweep`] repeats a workload over creator counts and modes and writes
//! one CSV row per run plus a median row per point.

mod forkjoin;
mod spawn;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;
use threadcache::{CacheStats, Runtime, RuntimeConfig};

pub use forkjoin::{is_sorted, parallel_sort, random_keys, run_forkjoin_bench};
pub use spawn::{run_deferred_bench, run_spawn_bench, Deferred};
pub use sweep::{median_of, parse_csv, run_sweep, CsvRow, SweepPoint};

/// Default subproblem size below which the fork-join sort stops spawning.
pub const DEFAULT_CUTOFF: usize = 8192;
/// Default number of keys sorted by the fork-join workload.
pub const DEFAULT_KEYS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Workload {
    Spawn,
    Deferred,
    Forkjoin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// A physical thread per spawn; the cache is never consulted.
    Default,
    /// Finished workers are cached and reused.
    Cached,
}

macro_rules! names {
    ($ty:ident { $($variant:ident => $name:literal),* }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),* })
            }
        }

        impl FromStr for $ty {
            type Err = BenchError;

            fn from_str(s: &str) -> Result<Self, BenchError> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    _ => Err(BenchError::Parse(format!("unknown {} {s:?}", stringify!($ty).to_lowercase()))),
                }
            }
        }
    };
}

names!(Workload { Spawn => "spawn", Deferred => "deferred", Forkjoin => "forkjoin" });
names!(Mode { Default => "default", Cached => "cached" });

impl Workload {
    pub fn unit(self) -> &'static str {
        match self {
            Workload::Spawn | Workload::Deferred => "threads/s",
            Workload::Forkjoin => "ms",
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("median of an even number ({0}) of samples is not defined")]
    EvenSamples(usize),
    #[error("run failed {attempts} times: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error("correctness gate failed: {0}")]
    Gate(String),
    #[error(transparent)]
    Runtime(#[from] threadcache::RuntimeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub workload: Workload,
    pub creators: usize,
    pub duration: Duration,
    pub runs: usize,
    pub seed: u64,
    /// Busy-work each child performs before returning.
    pub spin_ns: u64,
    pub keys: usize,
    pub cutoff: usize,
    /// Settings for cached runs. `caching` is forced on.
    pub cached: RuntimeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            workload: Workload::Spawn,
            creators: 1,
            duration: Duration::from_secs(10),
            runs: 7,
            seed: 42,
            spin_ns: 0,
            keys: DEFAULT_KEYS,
            cutoff: DEFAULT_CUTOFF,
            cached: RuntimeConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.duration.is_zero() {
            return Err(BenchError::Config("duration must be positive".into()));
        }
        if self.runs.is_multiple_of(2) {
            return Err(BenchError::Config(format!("runs must be odd, got {}", self.runs)));
        }
        if self.creators == 0 {
            return Err(BenchError::Config("creators must be at least 1".into()));
        }
        if self.cutoff == 0 {
            return Err(BenchError::Config("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn runtime(&self, mode: Mode) -> Result<Runtime, BenchError> {
        let config = match mode {
            Mode::Default => RuntimeConfig::uncached(),
            Mode::Cached => RuntimeConfig {
                caching: true,
                ..self.cached.clone()
            },
        };
        Ok(Runtime::new(config)?)
    }
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub workload: Workload,
    pub mode: Mode,
    pub creators: usize,
    pub run_index: usize,
    /// Threads per second, or elapsed milliseconds for `forkjoin`.
    pub value: f64,
    /// Counters at the start of the measured interval.
    pub before: CacheStats,
    /// Counters at the end of the measured interval.
    pub after: CacheStats,
    /// `physical_creates` growth over the two halves of the interval.
    pub creates_by_half: (u64, u64),
}

impl BenchResult {
    pub fn unit(&self) -> &'static str {
        self.workload.unit()
    }

    /// Counter deltas over the measured interval.
    pub fn interval(&self) -> CacheStats {
        self.after.since(&self.before)
    }

    /// Checks the mode-specific accounting and returns a description of the
    /// first violation.
    pub fn check(&self) -> Result<(), BenchError> {
        let s = &self.after;
        if s.spawns_total != s.cache_hits + s.physical_creates {
            return Err(BenchError::Gate(format!(
                "spawns {} != hits {} + creates {}",
                s.spawns_total, s.cache_hits, s.physical_creates
            )));
        }
        if self.value.is_nan() || self.value <= 0.0 {
            return Err(BenchError::Gate(format!("non-positive result {}", self.value)));
        }
        if self.mode == Mode::Default && s.cache_hits != 0 {
            return Err(BenchError::Gate(format!("{} cache hits in default mode", s.cache_hits)));
        }
        if self.mode == Mode::Cached && self.workload != Workload::Forkjoin {
            let (first, second) = self.creates_by_half;
            if second * 100 > first {
                return Err(BenchError::Gate(format!(
                    "physical creates still growing after warmup ({first} then {second})"
                )));
            }
        }
        Ok(())
    }
}

/// Number of logical CPUs.
pub fn cpu_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `1, 2, 4, ...` up to and including `max`.
pub fn powers_of_two_up_to(max: usize) -> Vec<usize> {
    let mut v = vec![1];
    while v[v.len() - 1] * 2 <= max {
        v.push(v[v.len() - 1] * 2);
    }
    if v[v.len() - 1] != max {
        v.push(max);
    }
    v
}
