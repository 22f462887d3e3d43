//! The recycling runtime: spawn, the per-thread dispatch loop, and the
//! hand-back of finished workers to the idle store.

use std::cell::Cell;
use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::clock::{self, Nanos};
use crate::config::RuntimeConfig;
use crate::error::{JoinError, RuntimeError, SpawnError};
use crate::idle_store::IdleStore;
use crate::reclaim::{self, ReleaseOutcome};
use crate::retention::{self, Verdict};
use crate::stats::{CacheStats, Counters};
use crate::task::{Completion, ExitStatus, JoinHandle, TaskShared};
use crate::worker::{Assignment, Entry, Order, Worker, WorkerId, WorkerState};

thread_local! {
    static CURRENT_TASK: Cell<u64> = const { Cell::new(0) };
    static CURRENT_WORKER: Cell<u64> = const { Cell::new(0) };
}

/// Logical id of the task running on this thread, if any.
pub fn current_task_id() -> Option<u64> {
    match CURRENT_TASK.with(Cell::get) {
        0 => None,
        id => Some(id),
    }
}

/// Id of the worker this thread is, if it is a runtime worker.
pub fn current_worker_id() -> Option<WorkerId> {
    match CURRENT_WORKER.with(Cell::get) {
        0 => None,
        id => Some(WorkerId(id)),
    }
}

/// Unwind payload carrying the status passed to [`logical_exit`].
struct LogicalExit(usize);

/// Ends the current logical thread with `status`.
///
/// On a runtime worker the frames between the task entry and this call are
/// unwound (running Rust destructors) and the worker goes back to its
/// dispatch loop; the physical thread survives. A `catch_unwind` inside the
/// task will intercept the unwind, so tasks must not swallow it.
///
/// On any other thread this terminates the OS thread via `pthread_exit`,
/// which is only sound on threads whose frames hold nothing to drop (for
/// example threads created directly with `pthread_create`).
pub fn logical_exit(status: usize) -> ! {
    if current_task_id().is_some() {
        panic::resume_unwind(Box::new(LogicalExit(status)));
    }
    // SAFETY: documented above; passthrough for unmanaged threads.
    unsafe { libc::pthread_exit(status as *mut libc::c_void) }
}

pub(crate) struct Inner {
    config: RuntimeConfig,
    store: IdleStore<Worker>,
    counters: Counters,
    shutdown: AtomicBool,
    natives: Mutex<HashSet<usize>>,
    stack_releases: AtomicU64,
    reaper_stop: Mutex<bool>,
    reaper_wake: Condvar,
}

/// A process-local cache of idle threads and the API for spawning onto it.
pub struct Runtime {
    inner: Arc<Inner>,
    reaper: Mutex<Option<thread::JoinHandle<()>>>,
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Result<Runtime, RuntimeError> {
        config.retention.validate()?;
        let inner = Arc::new(Inner {
            store: IdleStore::with_shards(config.shards),
            config,
            counters: Counters::default(),
            shutdown: AtomicBool::new(false),
            natives: Mutex::new(HashSet::new()),
            stack_releases: AtomicU64::new(0),
            reaper_stop: Mutex::new(false),
            reaper_wake: Condvar::new(),
        });
        let reaper = if inner.config.caching && inner.config.retention.needs_maintenance() {
            let inner = inner.clone();
            Some(
                thread::Builder::new()
                    .name("threadcache-reaper".into())
                    .spawn(move || reaper_loop(inner))?,
            )
        } else {
            None
        };
        Ok(Runtime {
            inner,
            reaper: Mutex::new(reaper),
        })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.inner.config
    }

    /// Runs `f` on a logical thread, reusing an idle worker when one exists.
    pub fn spawn<F>(&self, f: F) -> Result<JoinHandle, SpawnError>
    where
        F: FnOnce() -> usize + Send + 'static,
    {
        self.inner.spawn(Box::new(f))
    }

    pub fn stats(&self) -> CacheStats {
        self.inner.stats()
    }

    /// Number of idle workers currently cached.
    pub fn idle_count(&self) -> usize {
        self.inner.store.len()
    }

    /// Ids of the cached workers, newest first per shard.
    pub fn idle_workers(&self) -> Vec<WorkerId> {
        let mut out = Vec::new();
        self.inner.store.for_each_idle(|w, _| out.push(w.id()));
        out
    }

    /// Runs one retention pass now; returns how many workers were culled.
    pub fn reap_now(&self) -> usize {
        self.inner.reap(clock::now())
    }

    /// Releases stack memory of workers idle for longer than `older_than`.
    /// Returns how many workers were advised.
    pub fn release_idle_stacks(&self, older_than: Duration) -> usize {
        self.inner.release_idle_stacks(clock::now(), older_than)
    }

    /// Total successful stack releases so far.
    pub fn stack_releases(&self) -> u64 {
        self.inner.stack_releases.load(Ordering::Relaxed)
    }

    /// Whether `native` (a `pthread_t`) is a live worker of this runtime.
    /// Always false unless `track_native_handles` is set.
    pub fn is_worker_thread(&self, native: usize) -> bool {
        self.inner.natives.lock().contains(&native)
    }

    /// Stops caching, terminates idle workers and the maintenance thread.
    /// Workers still running tasks exit once their tasks are resolved.
    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        self.inner.drain();
        *self.inner.reaper_stop.lock() = true;
        self.inner.reaper_wake.notify_all();
        if let Some(h) = self.reaper.lock().take() {
            let _ = h.join();
        }
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Inner {
    fn stats(&self) -> CacheStats {
        self.counters.snapshot(self.store.len())
    }

    fn spawn(self: &Arc<Self>, entry: Entry) -> Result<JoinHandle, SpawnError> {
        if self.shutdown.load(Ordering::Acquire) {
            return Err(SpawnError::ShutDown);
        }
        // Counted live before the pop so the idle bound accounts for workers
        // that are still on their way back to the store.
        self.counters.enter_live();
        let task = TaskShared::new();
        let order = Order::Run(Assignment {
            task: task.clone(),
            entry,
        });
        let popped = if self.config.caching {
            self.store.pop()
        } else {
            None
        };
        match popped {
            Some(worker) => {
                worker.set_state(WorkerState::Running);
                worker.released.store(false, Ordering::Relaxed);
                task.bind(&worker);
                Counters::bump(&self.counters.cache_hits);
                Counters::bump(&self.counters.spawns_total);
                worker.deliver(order);
            }
            None => match self.create_worker(&task, order) {
                Ok(()) => {
                    Counters::bump(&self.counters.physical_creates);
                    Counters::bump(&self.counters.spawns_total);
                }
                Err(e) => {
                    self.counters.leave_live();
                    Counters::bump(&self.counters.spawn_failures);
                    return Err(SpawnError::Os(e));
                }
            },
        }
        Ok(JoinHandle {
            task,
            rt: self.clone(),
        })
    }

    fn create_worker(self: &Arc<Self>, task: &TaskShared, first: Order) -> std::io::Result<()> {
        let worker = Worker::new();
        let mut builder = thread::Builder::new();
        if let Some(size) = self.config.stack_size {
            builder = builder.stack_size(size);
        }
        let (inner, w) = (self.clone(), worker.clone());
        let handle = builder.spawn(move || dispatch_loop(inner, w, first))?;
        worker.set_native(native_of(&handle));
        task.bind(&worker);
        Ok(())
    }

    /// Returns a worker whose task is finished and resolved to the cache.
    /// Returns false when the worker must exit instead.
    fn retire(&self, worker: &Arc<Worker>) -> bool {
        if !self.config.caching || self.shutdown.load(Ordering::Acquire) {
            self.counters.leave_live();
            return false;
        }
        let cfg = &self.config.retention;
        let shard = self.store.local_shard();
        let decision = retention::admit(&self.store, shard, cfg);
        if decision.verdict == Verdict::Terminate {
            self.counters.leave_live();
            return false;
        }
        terminate_all(decision.evictions);
        worker.set_state(WorkerState::Idle);
        let len = self.store.push_to(shard, worker.clone(), clock::now());
        self.counters.saw_idle(len);
        self.counters.leave_live();
        terminate_all(retention::trim(&self.store, shard, cfg));
        if self.shutdown.load(Ordering::SeqCst) {
            self.drain();
        }
        true
    }

    /// Hand-back performed on a resolving (joining or detaching) thread.
    pub(crate) fn hand_back(&self, worker: Arc<Worker>) {
        if !self.retire(&worker) {
            worker.set_state(WorkerState::Terminating);
            worker.deliver(Order::Terminate);
        }
    }

    fn drain(&self) {
        while let Some(w) = self.store.pop() {
            terminate_all(vec![w]);
        }
    }

    fn reap(&self, now: Nanos) -> usize {
        let culled = retention::reap(&self.store, now, &self.config.retention);
        let n = culled.len();
        terminate_all(culled);
        n
    }

    fn release_idle_stacks(&self, now: Nanos, older_than: Duration) -> usize {
        let mut advised = 0;
        self.store.for_each_idle(|w, idle_since| {
            if now.since(idle_since) > older_than && !w.released.load(Ordering::Relaxed) {
                match reclaim::release_stack_memory(w) {
                    ReleaseOutcome::Advised { .. } => {
                        w.released.store(true, Ordering::Relaxed);
                        advised += 1;
                    }
                    ReleaseOutcome::Skipped | ReleaseOutcome::Unsupported => {}
                }
            }
        });
        self.stack_releases.fetch_add(advised as u64, Ordering::Relaxed);
        advised
    }

    fn maintain(&self) {
        let now = clock::now();
        self.reap(now);
        if let Some(after) = self.config.retention.release_after {
            self.release_idle_stacks(now, after);
        }
    }
}

fn terminate_all(workers: Vec<Arc<Worker>>) {
    for w in workers {
        w.set_state(WorkerState::Terminating);
        w.deliver(Order::Terminate);
    }
}

#[cfg(unix)]
fn native_of<T>(handle: &thread::JoinHandle<T>) -> usize {
    use std::os::unix::thread::JoinHandleExt;
    handle.as_pthread_t() as usize
}

fn current_native() -> usize {
    // SAFETY: no preconditions.
    unsafe { libc::pthread_self() as usize }
}

fn run_entry(task_id: u64, entry: Entry) -> Completion {
    CURRENT_TASK.with(|c| c.set(task_id));
    let result = panic::catch_unwind(AssertUnwindSafe(entry));
    CURRENT_TASK.with(|c| c.set(0));
    match result {
        Ok(value) => Ok(ExitStatus(value)),
        Err(payload) => match payload.downcast::<LogicalExit>() {
            Ok(exit) => Ok(ExitStatus(exit.0)),
            Err(_) => Err(JoinError::Poisoned),
        },
    }
}

fn dispatch_loop(inner: Arc<Inner>, worker: Arc<Worker>, first: Order) {
    let frame_marker = 0u8;
    worker.record_stack(
        reclaim::current_stack(),
        std::hint::black_box(&frame_marker) as *const u8 as usize,
    );
    worker.set_native(current_native());
    CURRENT_WORKER.with(|c| c.set(worker.id().0));
    if inner.config.track_native_handles {
        inner.natives.lock().insert(current_native());
    }

    let mut order = first;
    while let Order::Run(Assignment { task, entry }) = order {
        if worker.state() == WorkerState::Nascent {
            worker.set_state(WorkerState::Running);
        }
        if worker.count_task() > 0 {
            for hook in &inner.config.reset_hooks {
                hook();
            }
        }
        task.fire(run_entry(task.id, entry));
        if task.finish(&worker) {
            let kept = inner.retire(&worker);
            task.release();
            if !kept {
                worker.set_state(WorkerState::Terminating);
                break;
            }
        } else if inner.shutdown.load(Ordering::SeqCst) {
            // Nothing will be cached any more; the resolver only needs the
            // published result, not this thread.
            break;
        }
        drop(task);
        order = worker.wait_order();
    }

    Counters::bump(&inner.counters.physical_culls);
    if inner.config.track_native_handles {
        inner.natives.lock().remove(&current_native());
    }
}

fn reaper_loop(inner: Arc<Inner>) {
    let period = inner.config.retention.reap_period;
    let mut stop = inner.reaper_stop.lock();
    while !*stop {
        inner.reaper_wake.wait_for(&mut stop, period);
        if *stop {
            break;
        }
        MutexGuard::unlocked(&mut stop, || inner.maintain());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retention::RetentionConfig;

    fn rt() -> Runtime {
        Runtime::new(RuntimeConfig::default()).unwrap()
    }

    #[test]
    fn fresh_runtime_stats_are_zero() {
        assert_eq!(rt().stats(), CacheStats::default());
    }

    #[test]
    fn cold_spawn_creates() {
        let rt = rt();
        let h = rt.spawn(|| 0).unwrap();
        h.join().unwrap();
        let s = rt.stats();
        assert_eq!((s.spawns_total, s.physical_creates, s.cache_hits), (1, 1, 0));
    }

    #[test]
    fn second_spawn_hits() {
        let rt = rt();
        rt.spawn(|| 0).unwrap().join().unwrap();
        rt.spawn(|| 0).unwrap().join().unwrap();
        let s = rt.stats();
        assert_eq!((s.spawns_total, s.physical_creates, s.cache_hits), (2, 1, 1));
        assert_eq!(s.current_idle, 1);
    }

    #[test]
    fn returns_status() {
        let rt = rt();
        assert_eq!(rt.spawn(|| 7).unwrap().join(), Ok(ExitStatus(7)));
    }

    #[test]
    fn exit_immediately() {
        let rt = rt();
        assert_eq!(rt.spawn(|| logical_exit(5)).unwrap().join(), Ok(ExitStatus(5)));
    }

    #[test]
    fn panics_poison_and_recycle() {
        let rt = rt();
        let h = rt.spawn(|| panic!("boom")).unwrap();
        assert_eq!(h.join(), Err(JoinError::Poisoned));
        assert_eq!(rt.spawn(|| 3).unwrap().join(), Ok(ExitStatus(3)));
        let s = rt.stats();
        assert_eq!((s.physical_creates, s.cache_hits), (1, 1));
    }

    #[test]
    fn uncached_runtime_never_hits() {
        let rt = Runtime::new(RuntimeConfig::uncached()).unwrap();
        for _ in 0..5 {
            rt.spawn(|| 1).unwrap().join().unwrap();
        }
        let s = rt.stats();
        assert_eq!((s.physical_creates, s.cache_hits, s.current_idle), (5, 0, 0));
    }

    #[test]
    fn clamp_zero_terminates_worker() {
        let rt = Runtime::new(RuntimeConfig::with_retention(RetentionConfig::clamp(0))).unwrap();
        rt.spawn(|| 1).unwrap().join().unwrap();
        assert_eq!(rt.idle_count(), 0);
        rt.spawn(|| 1).unwrap().join().unwrap();
        assert_eq!(rt.stats().physical_creates, 2);
    }

    #[test]
    fn shutdown_rejects_spawns() {
        let rt = rt();
        rt.spawn(|| 1).unwrap().join().unwrap();
        rt.shutdown();
        assert_eq!(rt.idle_count(), 0);
        assert!(matches!(rt.spawn(|| 1), Err(SpawnError::ShutDown)));
    }
}
