//! A process-local cache of idle threads.
//!
//! Instead of letting a thread exit when its work is done, the runtime parks
//! it on a LIFO idle store and hands it the next spawn request. A logical
//! thread (one `spawn` .. `join` lifetime) is therefore decoupled from the
//! physical OS thread that serves it; one physical thread can serve many
//! logical ones.
//!
//! ```
//! use threadcache::{Runtime, RuntimeConfig};
//!
//! let rt = Runtime::new(RuntimeConfig::default()).unwrap();
//! for i in 0..4 {
//!     let h = rt.spawn(move || i * 2).unwrap();
//!     assert_eq!(h.join().unwrap().value(), i * 2);
//! }
//! let stats = rt.stats();
//! assert_eq!(stats.physical_creates, 1);
//! assert_eq!(stats.cache_hits, 3);
//! ```
//!
//! Thread-local storage is not reset between logical threads served by the
//! same worker; register `RuntimeConfig::reset_hooks` for state that must be
//! fresh, and do not rely on thread identifiers being unique over time.

pub mod clock;
pub mod config;
pub mod error;
pub mod idle_store;
pub mod reclaim;
pub mod retention;
mod runtime;
pub mod stats;
mod task;
#[cfg(feature = "testkit")]
pub mod testkit;
mod worker;

use std::sync::OnceLock;

pub use config::RuntimeConfig;
pub use error::{DetachError, JoinError, RuntimeError, SpawnError};
pub use retention::{ClampMode, Policy, RetentionConfig};
pub use runtime::{current_task_id, current_worker_id, logical_exit, Runtime};
pub use stats::CacheStats;
pub use task::{ExitStatus, JoinHandle};
pub use worker::{StackExtent, Worker, WorkerId, WorkerState};

/// Process-wide runtime configured from the `THREADCACHE*` environment
/// variables. Invalid settings fall back to the defaults with a warning.
pub fn global() -> &'static Runtime {
    static GLOBAL: OnceLock<Runtime> = OnceLock::new();
    GLOBAL.get_or_init(|| {
        let config = RuntimeConfig::from_env().unwrap_or_else(|e| {
            log::warn!("ignoring thread cache environment: {e}");
            RuntimeConfig::default()
        });
        Runtime::new(config).expect("failed to start the thread cache runtime")
    })
}

/// [`Runtime::spawn`] on the [`global`] runtime.
pub fn spawn<F>(f: F) -> Result<JoinHandle, SpawnError>
where
    F: FnOnce() -> usize + Send + 'static,
{
    global().spawn(f)
}

/// [`Runtime::stats`] of the [`global`] runtime.
pub fn stats() -> CacheStats {
    global().stats()
}
