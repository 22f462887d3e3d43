//! The record behind one physical OS thread.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use crate::idle_store::{Link, Linked};
use crate::task::TaskShared;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorkerId(pub(crate) u64);

impl WorkerId {
    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "worker-{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum WorkerState {
    Nascent = 0,
    Running = 1,
    Idle = 2,
    Terminating = 3,
}

impl WorkerState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => WorkerState::Nascent,
            1 => WorkerState::Running,
            2 => WorkerState::Idle,
            _ => WorkerState::Terminating,
        }
    }

    pub fn can_transition_to(self, next: WorkerState) -> bool {
        use WorkerState::*;
        matches!(
            (self, next),
            (Nascent, Running) | (Running, Idle) | (Idle, Running) | (Idle, Terminating) | (Running, Terminating)
        )
    }
}

pub(crate) type Entry = Box<dyn FnOnce() -> usize + Send + 'static>;

pub(crate) struct Assignment {
    pub task: Arc<TaskShared>,
    pub entry: Entry,
}

pub(crate) enum Order {
    Run(Assignment),
    Terminate,
}

/// Address range of a worker's stack, lowest address first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct StackExtent {
    pub low: usize,
    pub high: usize,
}

pub struct Worker {
    id: WorkerId,
    state: AtomicU8,
    link: Link<Worker>,
    slot: Mutex<Option<Order>>,
    wake: Condvar,
    native: AtomicUsize,
    stack_low: AtomicUsize,
    stack_high: AtomicUsize,
    /// Address inside the dispatch loop's frame; everything the parked thread
    /// can touch lies above `watermark - PARK_SLACK`.
    watermark: AtomicUsize,
    pub(crate) released: AtomicBool,
    served: AtomicU64,
}

unsafe impl Linked for Worker {
    fn link(&self) -> &Link<Worker> {
        &self.link
    }
}

static NEXT_WORKER: AtomicU64 = AtomicU64::new(1);

impl Worker {
    pub(crate) fn new() -> Arc<Worker> {
        Arc::new(Worker {
            id: WorkerId(NEXT_WORKER.fetch_add(1, Ordering::Relaxed)),
            state: AtomicU8::new(WorkerState::Nascent as u8),
            link: Link::new(),
            slot: Mutex::new(None),
            wake: Condvar::new(),
            native: AtomicUsize::new(0),
            stack_low: AtomicUsize::new(0),
            stack_high: AtomicUsize::new(0),
            watermark: AtomicUsize::new(0),
            released: AtomicBool::new(false),
            served: AtomicU64::new(0),
        })
    }

    pub fn id(&self) -> WorkerId {
        self.id
    }

    pub fn state(&self) -> WorkerState {
        WorkerState::from_u8(self.state.load(Ordering::Acquire))
    }

    /// The platform thread handle (`pthread_t`) of this worker.
    pub fn native_handle(&self) -> usize {
        self.native.load(Ordering::Acquire)
    }

    pub fn tasks_served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    pub fn stack_extent(&self) -> Option<StackExtent> {
        let low = self.stack_low.load(Ordering::Acquire);
        let high = self.stack_high.load(Ordering::Acquire);
        (high > low).then_some(StackExtent { low, high })
    }

    pub(crate) fn watermark(&self) -> usize {
        self.watermark.load(Ordering::Acquire)
    }

    pub(crate) fn set_native(&self, native: usize) {
        self.native.store(native, Ordering::Release);
    }

    pub(crate) fn record_stack(&self, extent: Option<StackExtent>, watermark: usize) {
        if let Some(e) = extent {
            self.stack_low.store(e.low, Ordering::Release);
            self.stack_high.store(e.high, Ordering::Release);
        }
        self.watermark.store(watermark, Ordering::Release);
    }

    pub(crate) fn count_task(&self) -> u64 {
        self.served.fetch_add(1, Ordering::Relaxed)
    }

    pub(crate) fn set_state(&self, to: WorkerState) {
        let from = WorkerState::from_u8(self.state.swap(to as u8, Ordering::AcqRel));
        debug_assert!(
            from.can_transition_to(to),
            "{} illegal transition {from:?} -> {to:?}",
            self.id
        );
    }

    /// Hands the parked worker its next order.
    pub(crate) fn deliver(&self, order: Order) {
        let mut slot = self.slot.lock();
        debug_assert!(slot.is_none(), "{} already holds an order", self.id);
        *slot = Some(order);
        drop(slot);
        self.wake.notify_one();
    }

    /// Parks until an order arrives. Spurious wakeups are absorbed here.
    pub(crate) fn wait_order(&self) -> Order {
        let mut slot = self.slot.lock();
        loop {
            if let Some(order) = slot.take() {
                return order;
            }
            self.wake.wait(&mut slot);
        }
    }
}

impl fmt::Debug for Worker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Worker")
            .field("id", &self.id)
            .field("state", &self.state())
            .field("served", &self.tasks_served())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use WorkerState::*;

    #[test]
    fn transition_table() {
        let all = [Nascent, Running, Idle, Terminating];
        let legal = [
            (Nascent, Running),
            (Running, Idle),
            (Idle, Running),
            (Idle, Terminating),
            (Running, Terminating),
        ];
        for from in all {
            for to in all {
                assert_eq!(from.can_transition_to(to), legal.contains(&(from, to)), "{from:?}->{to:?}");
            }
        }
    }

    #[test]
    fn order_rendezvous() {
        let w = Worker::new();
        let w2 = w.clone();
        let t = std::thread::spawn(move || matches!(w2.wait_order(), Order::Terminate));
        std::thread::sleep(std::time::Duration::from_millis(10));
        w.deliver(Order::Terminate);
        assert!(t.join().unwrap());
    }

    #[test]
    fn ids_are_unique() {
        assert_ne!(Worker::new().id(), Worker::new().id());
    }
}
