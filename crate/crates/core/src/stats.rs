//! Cache counters.
//!
//! Counters are updated with relaxed atomics so they stay off the measured
//! fast path. Each counter is individually monotonic; a snapshot is not a
//! single linearization point across counters, but at quiescence (no spawn or
//! retire in flight) every identity below holds exactly.

use std::sync::atomic::{AtomicU64, Ordering};

/// Point-in-time copy of the runtime counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    /// Successful spawns; always `cache_hits + physical_creates` at quiescence.
    pub spawns_total: u64,
    pub cache_hits: u64,
    pub physical_creates: u64,
    /// Physical worker threads that exited (culled, refused or uncached).
    pub physical_culls: u64,
    /// Spawns that failed because the OS refused a new thread.
    pub spawn_failures: u64,
    pub current_idle: u64,
    pub peak_idle: u64,
    /// Logical threads in flight: spawned and not yet handed back to the cache
    /// (or exited).
    pub live: u64,
    pub peak_live: u64,
}

impl CacheStats {
    /// Fraction of spawns served from the cache; zero when nothing spawned.
    pub fn hit_rate(&self) -> f64 {
        if self.spawns_total == 0 {
            0.0
        } else {
            self.cache_hits as f64 / self.spawns_total as f64
        }
    }

    /// Counter deltas from `earlier` to `self`; gauges are taken from `self`.
    pub fn since(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            spawns_total: self.spawns_total - earlier.spawns_total,
            cache_hits: self.cache_hits - earlier.cache_hits,
            physical_creates: self.physical_creates - earlier.physical_creates,
            physical_culls: self.physical_culls - earlier.physical_culls,
            spawn_failures: self.spawn_failures - earlier.spawn_failures,
            ..*self
        }
    }
}

#[derive(Default)]
pub(crate) struct Counters {
    pub spawns_total: AtomicU64,
    pub cache_hits: AtomicU64,
    pub physical_creates: AtomicU64,
    pub physical_culls: AtomicU64,
    pub spawn_failures: AtomicU64,
    pub peak_idle: AtomicU64,
    pub live: AtomicU64,
    pub peak_live: AtomicU64,
}

impl Counters {
    pub fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn enter_live(&self) {
        let live = self.live.fetch_add(1, Ordering::Relaxed) + 1;
        self.peak_live.fetch_max(live, Ordering::Relaxed);
    }

    pub fn leave_live(&self) {
        self.live.fetch_sub(1, Ordering::Relaxed);
    }

    pub fn saw_idle(&self, len: usize) {
        self.peak_idle.fetch_max(len as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self, current_idle: usize) -> CacheStats {
        let load = |c: &AtomicU64| c.load(Ordering::Relaxed);
        let current_idle = current_idle as u64;
        CacheStats {
            spawns_total: load(&self.spawns_total),
            cache_hits: load(&self.cache_hits),
            physical_creates: load(&self.physical_creates),
            physical_culls: load(&self.physical_culls),
            spawn_failures: load(&self.spawn_failures),
            current_idle,
            peak_idle: load(&self.peak_idle).max(current_idle),
            live: load(&self.live),
            peak_live: load(&self.peak_live),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_is_zero() {
        assert_eq!(Counters::default().snapshot(0), CacheStats::default());
    }

    #[test]
    fn peaks_follow_gauges() {
        let c = Counters::default();
        c.enter_live();
        c.enter_live();
        c.leave_live();
        c.saw_idle(3);
        let s = c.snapshot(1);
        assert_eq!((s.live, s.peak_live), (1, 2));
        assert_eq!((s.current_idle, s.peak_idle), (1, 3));
    }

    #[test]
    fn hit_rate_and_delta() {
        let a = CacheStats {
            spawns_total: 10,
            cache_hits: 5,
            physical_creates: 5,
            ..Default::default()
        };
        let b = CacheStats {
            spawns_total: 110,
            cache_hits: 104,
            physical_creates: 6,
            ..Default::default()
        };
        let d = b.since(&a);
        assert_eq!((d.spawns_total, d.cache_hits, d.physical_creates), (100, 99, 1));
        assert!((d.hit_rate() - 0.99).abs() < 1e-12);
        assert_eq!(CacheStats::default().hit_rate(), 0.0);
    }
}
