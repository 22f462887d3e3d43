//! Preloadable interposer for `pthread_create`, `pthread_exit`,
//! `pthread_join` and `pthread_detach`.
//!
//! ```text
//! LD_PRELOAD=libthreadcache_shim.so ./app
//! ```
//!
//! Default-attribute thread creations are served by a `threadcache` runtime,
//! so threads that finish are parked and reused for later creations instead
//! of exiting. Everything else (explicit attributes, handles of threads the
//! shim did not create, calls made while caching is disabled with
//! `THREADCACHE=0`) is forwarded to the next definition in link order.
//!
//! The handle returned for a cached thread is the serving worker's own
//! `pthread_t`, so `pthread_self()` inside the thread matches it. A worker
//! whose task finished stays bound to that handle until it is joined or
//! detached, just like a platform thread.
//!
//! This is not strictly sound: thread-local storage is not reset when a
//! worker is reused, thread identifiers recycle quickly, and cleanup
//! handlers registered from C with `pthread_cleanup_push` do not run when a
//! cached thread calls `pthread_exit`. `fork` is not supported while cached
//! workers exist.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::ffi::{c_int, c_void, CStr};
use std::mem::MaybeUninit;
use std::sync::{Arc, OnceLock};

use libc::{pthread_attr_t, pthread_t};
use parking_lot::{Condvar, Mutex};
use threadcache::{JoinError, Runtime, RuntimeConfig, SpawnError};

/// glibc's `PTHREAD_CANCELED`.
const PTHREAD_CANCELED: *mut c_void = usize::MAX as *mut c_void;

type StartRoutine = extern "C-unwind" fn(*mut c_void) -> *mut c_void;
type CreateFn =
    unsafe extern "C" fn(*mut pthread_t, *const pthread_attr_t, StartRoutine, *mut c_void) -> c_int;
type ExitFn = unsafe extern "C-unwind" fn(*mut c_void) -> !;
type JoinFn = unsafe extern "C" fn(pthread_t, *mut *mut c_void) -> c_int;
type DetachFn = unsafe extern "C" fn(pthread_t) -> c_int;

struct RealSymbols {
    create: CreateFn,
    exit: ExitFn,
    join: JoinFn,
    detach: DetachFn,
}

fn real() -> &'static RealSymbols {
    static REAL: OnceLock<RealSymbols> = OnceLock::new();
    REAL.get_or_init(|| {
        // SAFETY: the looked-up symbols have exactly these C signatures.
        unsafe {
            RealSymbols {
                create: std::mem::transmute::<*mut c_void, CreateFn>(next_symbol(c"pthread_create")),
                exit: std::mem::transmute::<*mut c_void, ExitFn>(next_symbol(c"pthread_exit")),
                join: std::mem::transmute::<*mut c_void, JoinFn>(next_symbol(c"pthread_join")),
                detach: std::mem::transmute::<*mut c_void, DetachFn>(next_symbol(c"pthread_detach")),
            }
        }
    })
}

unsafe fn next_symbol(name: &CStr) -> *mut c_void {
    let sym = libc::dlsym(libc::RTLD_NEXT, name.as_ptr());
    if sym.is_null() {
        let msg = b"threadcache: cannot resolve the underlying pthread API\n";
        libc::write(2, msg.as_ptr().cast(), msg.len());
        libc::abort();
    }
    sym
}

thread_local! {
    static IN_SHIM: Cell<bool> = const { Cell::new(false) };
}

/// Marks the current thread as executing shim internals; interposed calls
/// made meanwhile (by std creating worker threads, for instance) go straight
/// to the real implementation.
struct Reentry {
    prev: bool,
}

impl Reentry {
    /// `None` when already inside the shim or when TLS is unavailable.
    fn enter() -> Option<Reentry> {
        let prev = IN_SHIM.try_with(|c| c.replace(true)).ok()?;
        if prev {
            return None;
        }
        Some(Reentry { prev })
    }
}

impl Drop for Reentry {
    fn drop(&mut self) {
        let _ = IN_SHIM.try_with(|c| c.set(self.prev));
    }
}

struct Mapping {
    handle: threadcache::JoinHandle,
    logical_id: u64,
    detached: bool,
    finished: bool,
}

#[derive(Default)]
struct Handles {
    /// Logical threads by the `pthread_t` handed to the application.
    live: HashMap<usize, Mapping>,
    /// Handles whose logical thread is gone and whose value no platform
    /// thread has taken since.
    retired: HashSet<usize>,
}

impl Handles {
    fn retire(&mut self, key: usize) {
        self.live.remove(&key);
        self.retired.insert(key);
    }
}

struct Shim {
    runtime: Runtime,
    handles: Mutex<Handles>,
}

static SHIM: OnceLock<Option<Shim>> = OnceLock::new();

fn shim() -> Option<&'static Shim> {
    SHIM.get_or_init(|| {
        let mut config = match RuntimeConfig::from_env() {
            Ok(c) => c,
            Err(e) => {
                eprintln!("threadcache: {e}; caching disabled");
                return None;
            }
        };
        if !config.caching {
            return None;
        }
        config.track_native_handles = true;
        config.stack_size = Some(default_stack_size());
        match Runtime::new(config) {
            Ok(runtime) => Some(Shim {
                runtime,
                handles: Mutex::new(Handles::default()),
            }),
            Err(e) => {
                eprintln!("threadcache: {e}; caching disabled");
                None
            }
        }
    })
    .as_ref()
}

fn default_stack_size() -> usize {
    // SAFETY: attr is initialised before use and destroyed afterwards.
    unsafe {
        let mut attr = MaybeUninit::<pthread_attr_t>::uninit();
        libc::pthread_attr_init(attr.as_mut_ptr());
        let mut size = 0;
        libc::pthread_attr_getstacksize(attr.as_ptr(), &mut size);
        libc::pthread_attr_destroy(attr.as_mut_ptr());
        size.max(libc::PTHREAD_STACK_MIN)
    }
}

/// Only creations with default attributes may be served by cached workers.
/// glibc zero-fills the attribute object on init, so any setter call that
/// changes a property changes its bytes.
unsafe fn default_attrs(attr: *const pthread_attr_t) -> bool {
    if attr.is_null() {
        return true;
    }
    let mut dflt = MaybeUninit::<pthread_attr_t>::zeroed();
    libc::pthread_attr_init(dflt.as_mut_ptr());
    let n = std::mem::size_of::<pthread_attr_t>();
    let same = libc::memcmp(attr.cast(), dflt.as_ptr().cast(), n) == 0;
    libc::pthread_attr_destroy(dflt.as_mut_ptr());
    same
}

/// Opens once the creator has published the handle mapping, so a new thread
/// never runs application code that could look up its own handle too early.
#[derive(Default)]
struct Gate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn open(&self) {
        *self.open.lock() = true;
        self.cv.notify_one();
    }

    fn wait(&self) {
        let mut open = self.open.lock();
        while !*open {
            self.cv.wait(&mut open);
        }
    }
}

/// Runs on the worker when the start routine returns or unwinds out via
/// `pthread_exit`.
struct Finished {
    logical_id: u64,
}

impl Drop for Finished {
    fn drop(&mut self) {
        let Some(shim) = shim() else { return };
        let me = unsafe { libc::pthread_self() } as usize;
        let mut handles = shim.handles.lock();
        if let Some(m) = handles.live.get_mut(&me) {
            if m.logical_id == self.logical_id {
                if m.detached {
                    handles.retire(me);
                } else {
                    m.finished = true;
                }
            }
        }
    }
}

struct SendPtr(*mut c_void);
unsafe impl Send for SendPtr {}

/// # Safety
///
/// Same contract as the platform `pthread_create`.
#[no_mangle]
pub unsafe extern "C" fn pthread_create(
    thread: *mut pthread_t,
    attr: *const pthread_attr_t,
    start: StartRoutine,
    arg: *mut c_void,
) -> c_int {
    let Some(_guard) = Reentry::enter() else {
        return forward_create(thread, attr, start, arg);
    };
    let Some(shim) = shim().filter(|_| default_attrs(attr)) else {
        return forward_create(thread, attr, start, arg);
    };
    let gate = Arc::new(Gate::default());
    let arg = SendPtr(arg);
    let raw_arg = arg.0;
    let task_gate = gate.clone();
    let spawned = shim.runtime.spawn(move || {
        let arg = arg;
        task_gate.wait();
        let _finished = Finished {
            logical_id: threadcache::current_task_id().unwrap_or(0),
        };
        start(arg.0) as usize
    });
    let handle = match spawned {
        Ok(h) => h,
        Err(SpawnError::ShutDown) => return forward_create(thread, attr, start, raw_arg),
        Err(SpawnError::Os(_)) => return libc::EAGAIN,
    };
    let native = handle.native_thread();
    let logical_id = handle.logical_id();
    let mut handles = shim.handles.lock();
    handles.retired.remove(&native);
    handles.live.insert(
        native,
        Mapping {
            handle,
            logical_id,
            detached: false,
            finished: false,
        },
    );
    drop(handles);
    *thread = native as pthread_t;
    gate.open();
    0
}

/// Creates a platform thread; its handle value is no longer stale.
unsafe fn forward_create(
    thread: *mut pthread_t,
    attr: *const pthread_attr_t,
    start: StartRoutine,
    arg: *mut c_void,
) -> c_int {
    let rc = (real().create)(thread, attr, start, arg);
    if rc == 0 {
        if let Some(Some(shim)) = SHIM.get() {
            shim.handles.lock().retired.remove(&(*thread as usize));
        }
    }
    rc
}

/// # Safety
///
/// Same contract as the platform `pthread_exit`.
#[no_mangle]
pub unsafe extern "C-unwind" fn pthread_exit(retval: *mut c_void) -> ! {
    if let Some(Some(shim)) = SHIM.get() {
        if threadcache::current_task_id().is_some() {
            threadcache::logical_exit(retval as usize);
        }
        if libc::getpid() == libc::gettid() {
            // The process now lives until its last thread exits, and parked
            // workers would never exit on their own.
            let _guard = Reentry::enter();
            shim.runtime.shutdown();
        }
    }
    (real().exit)(retval)
}

/// # Safety
///
/// Same contract as the platform `pthread_join`.
#[no_mangle]
pub unsafe extern "C" fn pthread_join(thread: pthread_t, retval: *mut *mut c_void) -> c_int {
    let Some(_guard) = Reentry::enter() else {
        return (real().join)(thread, retval);
    };
    let Some(shim) = shim() else {
        return (real().join)(thread, retval);
    };
    if libc::pthread_equal(thread, libc::pthread_self()) != 0 {
        return libc::EDEADLK;
    }
    let key = thread as usize;
    let mapping = {
        let mut handles = shim.handles.lock();
        match handles.live.get(&key) {
            Some(m) if m.detached => return libc::EINVAL,
            Some(_) => {
                let m = handles.live.remove(&key);
                handles.retired.insert(key);
                m
            }
            None if handles.retired.contains(&key) => return libc::ESRCH,
            None => None,
        }
    };
    let Some(mapping) = mapping else {
        if shim.runtime.is_worker_thread(key) {
            return libc::ESRCH;
        }
        return (real().join)(thread, retval);
    };
    let value = match mapping.handle.join() {
        Ok(status) => status.value() as *mut c_void,
        Err(JoinError::Poisoned) => PTHREAD_CANCELED,
        Err(JoinError::Deadlock) => return libc::EDEADLK,
        Err(JoinError::Detached | JoinError::AlreadyJoined) => return libc::EINVAL,
    };
    if !retval.is_null() {
        *retval = value;
    }
    0
}

/// # Safety
///
/// Same contract as the platform `pthread_detach`.
#[no_mangle]
pub unsafe extern "C" fn pthread_detach(thread: pthread_t) -> c_int {
    let Some(_guard) = Reentry::enter() else {
        return (real().detach)(thread);
    };
    let Some(shim) = shim() else {
        return (real().detach)(thread);
    };
    let key = thread as usize;
    let mut handles = shim.handles.lock();
    if !handles.live.contains_key(&key) && handles.retired.contains(&key) {
        return libc::ESRCH;
    }
    match handles.live.get_mut(&key) {
        Some(m) if m.detached => libc::EINVAL,
        Some(m) => {
            if m.handle.detach().is_err() {
                return libc::EINVAL;
            }
            if m.finished {
                handles.retire(key);
            } else {
                m.detached = true;
            }
            0
        }
        None => {
            drop(handles);
            if shim.runtime.is_worker_thread(key) {
                libc::ESRCH
            } else {
                (real().detach)(thread)
            }
        }
    }
}

/// Counter snapshot exported for tests and tooling.
#[repr(C)]
#[derive(Default)]
pub struct ThreadcacheStats {
    pub spawns_total: u64,
    pub cache_hits: u64,
    pub physical_creates: u64,
    pub physical_culls: u64,
    pub current_idle: u64,
    pub peak_idle: u64,
}

/// Fills `out` and returns 0, or returns 1 (and zeroes `out`) when caching is
/// disabled.
///
/// # Safety
///
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn threadcache_stats(out: *mut ThreadcacheStats) -> c_int {
    let (rc, stats) = match shim() {
        Some(shim) => {
            let s = shim.runtime.stats();
            (
                0,
                ThreadcacheStats {
                    spawns_total: s.spawns_total,
                    cache_hits: s.cache_hits,
                    physical_creates: s.physical_creates,
                    physical_culls: s.physical_culls,
                    current_idle: s.current_idle,
                    peak_idle: s.peak_idle,
                },
            )
        }
        None => (1, ThreadcacheStats::default()),
    };
    if !out.is_null() {
        *out = stats;
    }
    rc
}
