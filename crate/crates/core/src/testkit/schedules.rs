//! Randomized spawn/join schedules against a live runtime.

use std::any::Any;
use std::hint::black_box;
use std::panic;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Once};
use std::thread;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::{
    logical_exit, CacheStats, DetachError, ExitStatus, JoinError, JoinHandle, RetentionConfig, Runtime,
    RuntimeConfig,
};

fn spin(iters: u32) {
    for i in 0..iters {
        black_box(i);
    }
}

/// Payload used for deliberate panics; the hook installed by
/// [`quiet_marker_panics`] keeps them off stderr.
pub struct MarkerPanic;

pub fn quiet_marker_panics() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        let default = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            let payload: &(dyn Any + Send) = info.payload();
            if !payload.is::<MarkerPanic>() {
                default(info);
            }
        }));
    });
}

/// Concurrency as seen by the test: logical threads spawned and not yet
/// joined, tracked independently of the runtime's own counters.
#[derive(Default)]
struct Alive {
    now: AtomicU64,
    peak: AtomicU64,
}

impl Alive {
    fn enter(&self) {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.now.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BoundSummary {
    pub schedules: usize,
    pub max_threads_seen: u64,
    pub max_idle_seen: u64,
}

/// Runs `count` random schedules, each on a fresh runtime, with at most
/// `max_threads` threads alive at once counting the spawning thread. Checks
/// that the idle store never held more than `N - 1` workers, where `N` is
/// the schedule's peak thread count.
pub fn idle_bound(seed: u64, count: usize, max_threads: u64) -> Result<BoundSummary, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut summary = BoundSummary::default();
    for schedule in 0..count {
        let unbounded = rng.gen_bool(0.7);
        let retention = if unbounded {
            RetentionConfig::unbounded()
        } else {
            RetentionConfig::clamp(rng.gen_range(0..8))
        };
        let rt = Arc::new(Runtime::new(RuntimeConfig::with_retention(retention)).map_err(|e| e.to_string())?);
        let alive = Arc::new(Alive::default());
        run_bound_schedule(&rt, &alive, &mut rng, max_threads - 1);
        let stats = rt.stats();
        let peak_tasks = alive.peak.load(Ordering::SeqCst);
        let n = peak_tasks + 1;
        if n > max_threads {
            return Err(format!("schedule {schedule}: generator exceeded {max_threads} threads"));
        }
        if stats.peak_idle > n - 1 {
            return Err(format!(
                "schedule {schedule}: {} idle workers with at most {n} threads alive",
                stats.peak_idle
            ));
        }
        if stats.peak_live > peak_tasks {
            return Err(format!("schedule {schedule}: runtime saw {} live > {peak_tasks}", stats.peak_live));
        }
        if unbounded && stats.physical_creates > peak_tasks {
            return Err(format!(
                "schedule {schedule}: {} workers created for {peak_tasks} concurrent tasks",
                stats.physical_creates
            ));
        }
        check_conservation(&stats).map_err(|e| format!("schedule {schedule}: {e}"))?;
        summary.schedules += 1;
        summary.max_threads_seen = summary.max_threads_seen.max(n);
        summary.max_idle_seen = summary.max_idle_seen.max(stats.peak_idle);
    }
    Ok(summary)
}

fn run_bound_schedule(rt: &Arc<Runtime>, alive: &Arc<Alive>, rng: &mut StdRng, budget: u64) {
    let mut outstanding: Vec<(JoinHandle, u64)> = Vec::new();
    let mut reserved = 0;
    let steps = rng.gen_range(1..80);
    for _ in 0..steps {
        let children = rng.gen_range(0..4u64);
        let weight = 1 + children;
        if reserved + weight <= budget && (outstanding.is_empty() || rng.gen_bool(0.55)) {
            let work = rng.gen_range(0..3000);
            let task_alive = alive.clone();
            let child_rt = rt.clone();
            alive.enter();
            let h = rt
                .spawn(move || {
                    spin(work);
                    let mut kids = Vec::new();
                    for c in 0..children {
                        task_alive.enter();
                        kids.push(child_rt.spawn(move || c as usize).unwrap());
                    }
                    for k in kids {
                        k.join().unwrap();
                        task_alive.leave();
                    }
                    0
                })
                .unwrap();
            reserved += weight;
            outstanding.push((h, weight));
        } else if !outstanding.is_empty() {
            let i = rng.gen_range(0..outstanding.len());
            let (h, weight) = outstanding.swap_remove(i);
            h.join().unwrap();
            alive.leave();
            reserved -= weight;
        }
    }
    for (h, _) in outstanding {
        h.join().unwrap();
        alive.leave();
    }
}

pub fn check_conservation(stats: &CacheStats) -> Result<(), String> {
    if stats.spawns_total != stats.cache_hits + stats.physical_creates {
        return Err(format!(
            "spawns {} != hits {} + creates {}",
            stats.spawns_total, stats.cache_hits, stats.physical_creates
        ));
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct JoinSummary {
    pub schedules: usize,
    pub by_kind: [usize; 8],
    pub stats: CacheStats,
}

fn nested_exit(depth: u32, status: usize) -> usize {
    if depth == 0 {
        logical_exit(status)
    }
    black_box(nested_exit(depth - 1, status)) + 1
}

/// Exercises join/detach semantics over `count` randomized schedules on one
/// runtime, checking every result against the expected outcome.
pub fn join_semantics(seed: u64, count: usize) -> Result<JoinSummary, String> {
    quiet_marker_panics();
    let mut rng = StdRng::seed_from_u64(seed);
    let rt = Runtime::new(RuntimeConfig::default()).map_err(|e| e.to_string())?;
    let mut summary = JoinSummary::default();
    for i in 0..count {
        let kind = rng.gen_range(0..8);
        let value = rng.gen_range(0..1_000_000usize);
        let delay = rng.gen_range(0..2000);
        let fail = |what: String| Err(format!("schedule {i} (kind {kind}): {what}"));
        match kind {
            // Join after the task has certainly finished.
            0 => {
                let h = rt.spawn(move || value).map_err(|e| e.to_string())?;
                while !h.is_finished() {
                    thread::yield_now();
                }
                let got = h.join();
                if got != Ok(ExitStatus(value)) {
                    return fail(format!("join after finish returned {got:?}"));
                }
            }
            // Join while the task is still starting or running.
            1 => {
                let h = rt
                    .spawn(move || {
                        spin(delay);
                        value
                    })
                    .map_err(|e| e.to_string())?;
                let got = h.join();
                if got != Ok(ExitStatus(value)) {
                    return fail(format!("early join returned {got:?}"));
                }
            }
            // Early exit from nested frames.
            2 => {
                let depth = rng.gen_range(0..4);
                let h = rt.spawn(move || nested_exit(depth, value)).map_err(|e| e.to_string())?;
                let got = h.join();
                if got != Ok(ExitStatus(value)) {
                    return fail(format!("logical exit returned {got:?}"));
                }
            }
            // Detach, then the task completes unobserved.
            3 => {
                let done = Arc::new(AtomicBool::new(false));
                let flag = done.clone();
                let h = rt
                    .spawn(move || {
                        spin(delay);
                        flag.store(true, Ordering::Release);
                        value
                    })
                    .map_err(|e| e.to_string())?;
                if rng.gen_bool(0.5) {
                    spin(delay);
                }
                if let Err(e) = h.detach() {
                    return fail(format!("detach failed: {e:?}"));
                }
                if h.join() != Err(JoinError::Detached) {
                    return fail("join after detach did not fail".into());
                }
                if h.detach() != Err(DetachError::AlreadyDetached) {
                    return fail("second detach did not fail".into());
                }
                while !done.load(Ordering::Acquire) {
                    thread::yield_now();
                }
            }
            // Double join and detach-after-join.
            4 => {
                let h = rt.spawn(move || value).map_err(|e| e.to_string())?;
                if h.join() != Ok(ExitStatus(value)) {
                    return fail("first join failed".into());
                }
                if h.join() != Err(JoinError::AlreadyJoined) {
                    return fail("second join did not fail".into());
                }
                if h.detach() != Err(DetachError::AlreadyJoined) {
                    return fail("detach after join did not fail".into());
                }
            }
            // Panicking task.
            5 => {
                let h = rt
                    .spawn(move || {
                        spin(delay);
                        panic::panic_any(MarkerPanic)
                    })
                    .map_err(|e| e.to_string())?;
                if h.join() != Err(JoinError::Poisoned) {
                    return fail("panic did not poison".into());
                }
            }
            // Join from a different thread than the spawner.
            6 => {
                let h = rt
                    .spawn(move || {
                        spin(delay);
                        value
                    })
                    .map_err(|e| e.to_string())?;
                let got = thread::spawn(move || h.join()).join().unwrap();
                if got != Ok(ExitStatus(value)) {
                    return fail(format!("foreign join returned {got:?}"));
                }
            }
            // Writes made by the task are visible after join.
            _ => {
                let cell = Arc::new(AtomicU64::new(0));
                let c = cell.clone();
                let h = rt
                    .spawn(move || {
                        spin(delay);
                        c.store(value as u64, Ordering::Relaxed);
                        0
                    })
                    .map_err(|e| e.to_string())?;
                h.join().map_err(|e| format!("{e:?}"))?;
                if cell.load(Ordering::Relaxed) != value as u64 {
                    return fail("task write not visible after join".into());
                }
            }
        }
        summary.by_kind[kind] += 1;
        summary.schedules += 1;
    }
    // Wait for detached stragglers to be handed back before auditing.
    while rt.stats().live > 0 {
        thread::yield_now();
    }
    let stats = rt.stats();
    check_conservation(&stats)?;
    if stats.spawns_total != count as u64 {
        return Err(format!("{} spawns recorded for {count} schedules", stats.spawns_total));
    }
    summary.stats = stats;
    Ok(summary)
}
