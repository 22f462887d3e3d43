//! Spawn-loop workloads: each creator repeatedly spawns one child and waits
//! for it, with no coordination between creators.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use threadcache::Runtime;

use crate::{BenchConfig, BenchError, BenchResult, Mode, Workload};

/// A computation whose thread is only created when the result is demanded.
pub struct Deferred<'rt, F> {
    rt: &'rt Runtime,
    f: F,
}

impl<'rt, F> Deferred<'rt, F>
where
    F: FnOnce() -> usize + Send + 'static,
{
    pub fn new(rt: &'rt Runtime, f: F) -> Self {
        Deferred { rt, f }
    }

    /// Runs the computation on a logical thread and waits for its result.
    pub fn get(self) -> Result<usize, BenchError> {
        let h = self.rt.spawn(self.f).map_err(|e| BenchError::Gate(format!("spawn: {e}")))?;
        let status = h.join().map_err(|e| BenchError::Gate(format!("join: {e}")))?;
        Ok(status.value())
    }
}

fn spin_for(ns: u64) {
    if ns == 0 {
        return;
    }
    let until = Instant::now() + Duration::from_nanos(ns);
    while Instant::now() < until {
        std::hint::spin_loop();
    }
}

/// Holds creators until the control thread starts the clock.
#[derive(Default)]
struct StartGate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl StartGate {
    fn open(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }

    fn wait(&self) {
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
    }
}

#[repr(align(64))]
#[derive(Default)]
struct Counter(AtomicU64);

const ATTEMPTS: usize = 3;

pub fn run_spawn_bench(cfg: &BenchConfig, mode: Mode, run_index: usize) -> Result<BenchResult, BenchError> {
    with_retries(run_index, || timed_loop(cfg, mode, run_index, Workload::Spawn))
}

pub fn run_deferred_bench(cfg: &BenchConfig, mode: Mode, run_index: usize) -> Result<BenchResult, BenchError> {
    with_retries(run_index, || timed_loop(cfg, mode, run_index, Workload::Deferred))
}

/// Discards and reruns failed runs.
fn with_retries(
    run_index: usize,
    mut run: impl FnMut() -> Result<BenchResult, BenchError>,
) -> Result<BenchResult, BenchError> {
    let mut last = String::new();
    for attempt in 1..=ATTEMPTS {
        match run() {
            Ok(r) => return Ok(r),
            Err(e) => {
                log::warn!("run {run_index} attempt {attempt} discarded: {e}");
                last = e.to_string();
            }
        }
    }
    Err(BenchError::Exhausted {
        attempts: ATTEMPTS,
        last,
    })
}

fn timed_loop(cfg: &BenchConfig, mode: Mode, run_index: usize, workload: Workload) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let rt = Arc::new(cfg.runtime(mode)?);
    let stop = Arc::new(AtomicBool::new(false));
    let counts: Arc<Vec<Counter>> = Arc::new((0..cfg.creators).map(|_| Counter::default()).collect());
    let failure: Arc<Mutex<Option<String>>> = Arc::new(Mutex::new(None));
    let ready = Arc::new(StartGate::default());
    let spin_ns = cfg.spin_ns;

    let mut creators = Vec::with_capacity(cfg.creators);
    for c in 0..cfg.creators {
        let shared = (rt.clone(), stop.clone(), counts.clone(), failure.clone(), ready.clone());
        let body = move || {
            let (rt, stop, counts, failure, ready) = shared;
            ready.wait();
            while !stop.load(Ordering::Relaxed) {
                let child = move || {
                    spin_for(spin_ns);
                    0
                };
                let outcome = match workload {
                    Workload::Deferred => Deferred::new(&rt, child).get().map(drop).map_err(|e| e.to_string()),
                    _ => match rt.spawn(child) {
                        Ok(h) => h.join().map(drop).map_err(|e| format!("join: {e}")),
                        Err(e) => Err(format!("spawn: {e}")),
                    },
                };
                if let Err(e) = outcome {
                    stop.store(true, Ordering::Relaxed);
                    failure.lock().unwrap().get_or_insert(e);
                    return 1;
                }
                counts[c].0.fetch_add(1, Ordering::Relaxed);
            }
            0
        };
        match rt.spawn(body) {
            Ok(h) => creators.push(h),
            Err(e) => {
                stop.store(true, Ordering::Relaxed);
                ready.open();
                for h in creators {
                    let _ = h.join();
                }
                return Err(BenchError::Gate(format!("creator spawn failed: {e}")));
            }
        }
    }

    let completed = || counts.iter().map(|c| c.0.load(Ordering::Relaxed)).sum::<u64>();
    ready.open();
    let t0 = Instant::now();
    let (c0, before) = (completed(), rt.stats());
    thread::sleep(cfg.duration / 2);
    let mid = rt.stats();
    let remaining = cfg.duration.saturating_sub(t0.elapsed());
    thread::sleep(remaining);
    let (c1, after) = (completed(), rt.stats());
    let elapsed = t0.elapsed();
    stop.store(true, Ordering::Relaxed);
    for h in creators {
        let _ = h.join();
    }
    if let Some(e) = failure.lock().unwrap().take() {
        return Err(BenchError::Gate(format!("a creator failed: {e}")));
    }
    Ok(BenchResult {
        workload,
        mode,
        creators: cfg.creators,
        run_index,
        value: (c1 - c0) as f64 / elapsed.as_secs_f64(),
        before,
        after,
        creates_by_half: (
            mid.physical_creates - before.physical_creates,
            after.physical_creates - mid.physical_creates,
        ),
    })
}
