//! Logical threads: the per-spawn record, its completion latch, and the
//! handle returned to the spawner.
//!
//! A finished task keeps custody of its worker until the handle is resolved
//! (joined or detached), mirroring how a joinable platform thread keeps its
//! identity until joined. Whichever side comes second, the finishing worker or
//! the resolving caller, hands the worker back to the cache; a joiner is only
//! released after that hand-back, so a spawn issued right after `join`
//! returns always finds the worker idle.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use crate::error::{DetachError, JoinError};
use crate::runtime::{current_task_id, Inner};
use crate::worker::{Worker, WorkerId};

/// Word-sized value a logical thread finished with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct ExitStatus(pub usize);

impl ExitStatus {
    pub fn value(self) -> usize {
        self.0
    }
}

pub(crate) type Completion = Result<ExitStatus, JoinError>;

const JOINABLE: u8 = 0;
const DETACHED: u8 = 1;
const JOINED: u8 = 2;

const FINISHED: u8 = 1;
const RESOLVED: u8 = 2;

#[derive(Default)]
struct LatchState {
    value: Option<Completion>,
    released: bool,
}

pub(crate) struct TaskShared {
    pub id: u64,
    join_state: AtomicU8,
    custody: AtomicU8,
    held: Mutex<Option<Arc<Worker>>>,
    fired: AtomicBool,
    latch: Mutex<LatchState>,
    released: Condvar,
    worker_id: AtomicU64,
    native: AtomicUsize,
}

static NEXT_TASK: AtomicU64 = AtomicU64::new(1);

impl TaskShared {
    pub fn new() -> Arc<Self> {
        Arc::new(TaskShared {
            id: NEXT_TASK.fetch_add(1, Ordering::Relaxed),
            join_state: AtomicU8::new(JOINABLE),
            custody: AtomicU8::new(0),
            held: Mutex::new(None),
            fired: AtomicBool::new(false),
            latch: Mutex::new(LatchState::default()),
            released: Condvar::new(),
            worker_id: AtomicU64::new(0),
            native: AtomicUsize::new(0),
        })
    }

    pub fn bind(&self, worker: &Worker) {
        self.worker_id.store(worker.id().0, Ordering::Relaxed);
        self.native.store(worker.native_handle(), Ordering::Release);
    }

    /// Records the outcome. Fires exactly once, before the worker is idle.
    pub fn fire(&self, completion: Completion) {
        let mut latch = self.latch.lock();
        debug_assert!(latch.value.is_none(), "latch fired twice");
        latch.value = Some(completion);
        self.fired.store(true, Ordering::Release);
    }

    /// Wakes the joiner; called once the worker has been handed back.
    pub fn release(&self) {
        self.latch.lock().released = true;
        self.released.notify_all();
    }

    fn wait_released(&self) -> Completion {
        let mut latch = self.latch.lock();
        while !latch.released {
            self.released.wait(&mut latch);
        }
        latch.value.take().expect("latch released before firing")
    }

    /// Worker side, after `fire`. Returns true when the worker must hand
    /// itself back; otherwise the task keeps it until resolved.
    pub fn finish(&self, worker: &Arc<Worker>) -> bool {
        *self.held.lock() = Some(worker.clone());
        if self.custody.fetch_or(FINISHED, Ordering::AcqRel) & RESOLVED != 0 {
            self.held.lock().take();
            true
        } else {
            false
        }
    }

    /// Resolver side, after claiming join/detach. Returns the worker when the
    /// task already finished and the caller must hand it back.
    fn resolve(&self) -> Option<Arc<Worker>> {
        if self.custody.fetch_or(RESOLVED, Ordering::AcqRel) & FINISHED != 0 {
            let worker = self.held.lock().take();
            debug_assert!(worker.is_some());
            worker
        } else {
            None
        }
    }
}

/// Handle to a logical thread. Dropping a still-joinable handle detaches it.
pub struct JoinHandle {
    pub(crate) task: Arc<TaskShared>,
    pub(crate) rt: Arc<Inner>,
}

impl JoinHandle {
    pub fn logical_id(&self) -> u64 {
        self.task.id
    }

    /// Worker serving this task (known once dispatched).
    pub fn worker_id(&self) -> Option<WorkerId> {
        match self.task.worker_id.load(Ordering::Relaxed) {
            0 => None,
            id => Some(WorkerId(id)),
        }
    }

    /// Platform thread handle of the serving worker (`pthread_t`).
    pub fn native_thread(&self) -> usize {
        self.task.native.load(Ordering::Acquire)
    }

    /// True once the task's latch has fired.
    pub fn is_finished(&self) -> bool {
        self.task.fired.load(Ordering::Acquire)
    }

    /// Blocks until the task completes and returns its exit status. All of
    /// the task's writes happen-before the return.
    pub fn join(&self) -> Result<ExitStatus, JoinError> {
        if current_task_id() == Some(self.task.id) {
            return Err(JoinError::Deadlock);
        }
        match self
            .task
            .join_state
            .compare_exchange(JOINABLE, JOINED, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => {}
            Err(DETACHED) => return Err(JoinError::Detached),
            Err(_) => return Err(JoinError::AlreadyJoined),
        }
        self.settle();
        self.task.wait_released()
    }

    /// Marks the task detached; its worker returns to the cache on completion.
    pub fn detach(&self) -> Result<(), DetachError> {
        match self
            .task
            .join_state
            .compare_exchange(JOINABLE, DETACHED, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => {}
            Err(DETACHED) => return Err(DetachError::AlreadyDetached),
            Err(_) => return Err(DetachError::AlreadyJoined),
        }
        self.settle();
        Ok(())
    }

    fn settle(&self) {
        if let Some(worker) = self.task.resolve() {
            self.rt.hand_back(worker);
            self.task.release();
        }
    }
}

impl Drop for JoinHandle {
    fn drop(&mut self) {
        if self.task.join_state.load(Ordering::Acquire) == JOINABLE {
            let _ = self.detach();
        }
    }
}

impl fmt::Debug for JoinHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JoinHandle")
            .field("logical_id", &self.task.id)
            .field("worker", &self.worker_id())
            .field("finished", &self.is_finished())
            .finish()
    }
}
