//! Retention policies: which idle entries the cache keeps, and for how long.

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::clock::Nanos;
use crate::idle_store::{IdleStore, Linked};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Keep every worker that finishes.
    Unbounded,
    /// Keep at most `clamp_size` idle workers.
    Clamp,
    /// Cull workers idle for longer than `max_idle_age`.
    AgeOut,
    /// Cull oldest-first until the summed idle time is within `budget`.
    IntegralBudget,
}

/// What `Clamp` does with a worker that arrives at a full store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ClampMode {
    /// Admit the incoming (warm) worker and evict the coldest.
    #[default]
    EvictOldest,
    /// Turn the incoming worker away.
    RefuseIncoming,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetentionConfig {
    pub policy: Policy,
    pub clamp_size: usize,
    pub clamp_mode: ClampMode,
    pub max_idle_age: Duration,
    /// Thread·time budget for `IntegralBudget`.
    pub budget: Duration,
    pub reap_period: Duration,
    /// Idle time after which a worker's stack pages are handed back to the OS.
    pub release_after: Option<Duration>,
}

impl Default for RetentionConfig {
    fn default() -> Self {
        RetentionConfig {
            policy: Policy::Unbounded,
            clamp_size: 64,
            clamp_mode: ClampMode::EvictOldest,
            max_idle_age: Duration::from_secs(10),
            budget: Duration::from_secs(60),
            reap_period: Duration::from_secs(1),
            release_after: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_idle_age must be positive")]
    ZeroAge,
    #[error("reap_period must be positive")]
    ZeroReapPeriod,
    #[error("invalid value {value:?} for {var}")]
    Invalid { var: &'static str, value: String },
}

impl RetentionConfig {
    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn clamp(size: usize) -> Self {
        RetentionConfig {
            policy: Policy::Clamp,
            clamp_size: size,
            ..Self::default()
        }
    }

    pub fn age_out(max_idle_age: Duration) -> Self {
        RetentionConfig {
            policy: Policy::AgeOut,
            max_idle_age,
            ..Self::default()
        }
    }

    pub fn integral_budget(budget: Duration) -> Self {
        RetentionConfig {
            policy: Policy::IntegralBudget,
            budget,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_idle_age.is_zero() {
            return Err(ConfigError::ZeroAge);
        }
        if self.reap_period.is_zero() {
            return Err(ConfigError::ZeroReapPeriod);
        }
        Ok(())
    }

    /// Whether a periodic maintenance pass has anything to do.
    pub fn needs_maintenance(&self) -> bool {
        matches!(self.policy, Policy::AgeOut | Policy::IntegralBudget)
            || self.release_after.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Cache,
    Terminate,
}

#[derive(Debug)]
pub struct AdmitDecision<T> {
    pub verdict: Verdict,
    /// Entries removed from the store to make room; empty unless `Cache`.
    pub evictions: Vec<Arc<T>>,
}

impl<T> AdmitDecision<T> {
    fn cache() -> Self {
        AdmitDecision {
            verdict: Verdict::Cache,
            evictions: Vec::new(),
        }
    }

    fn terminate() -> Self {
        AdmitDecision {
            verdict: Verdict::Terminate,
            evictions: Vec::new(),
        }
    }
}

/// Decides whether a worker that just finished its task may be pushed onto
/// `shard`. Must be called before that push.
pub fn admit<T: Linked>(store: &IdleStore<T>, shard: usize, cfg: &RetentionConfig) -> AdmitDecision<T> {
    match cfg.policy {
        Policy::Unbounded | Policy::AgeOut | Policy::IntegralBudget => AdmitDecision::cache(),
        Policy::Clamp if cfg.clamp_size == 0 => AdmitDecision::terminate(),
        Policy::Clamp => {
            let mut locked = store.lock_shard(shard);
            let len = locked.len();
            match cfg.clamp_mode {
                ClampMode::RefuseIncoming if len >= cfg.clamp_size => AdmitDecision::terminate(),
                ClampMode::RefuseIncoming => AdmitDecision::cache(),
                ClampMode::EvictOldest => {
                    let overflow = (len + 1).saturating_sub(cfg.clamp_size);
                    AdmitDecision {
                        verdict: Verdict::Cache,
                        evictions: locked.cull_oldest(overflow),
                    }
                }
            }
        }
    }
}

/// Re-establishes the clamp after a push. A no-op when pushes do not race,
/// since `admit` already made room.
pub fn trim<T: Linked>(store: &IdleStore<T>, shard: usize, cfg: &RetentionConfig) -> Vec<Arc<T>> {
    if cfg.policy != Policy::Clamp || store.shard_len(shard) <= cfg.clamp_size {
        return Vec::new();
    }
    let mut locked = store.lock_shard(shard);
    let overflow = locked.len().saturating_sub(cfg.clamp_size);
    locked.cull_oldest(overflow)
}

/// Periodic culling for the time-based policies, shard by shard. `now` is
/// frozen for the whole pass. Returns the culled entries, oldest first within
/// each shard.
pub fn reap<T: Linked>(store: &IdleStore<T>, now: Nanos, cfg: &RetentionConfig) -> Vec<Arc<T>> {
    let mut culled = Vec::new();
    if matches!(cfg.policy, Policy::Unbounded | Policy::Clamp) {
        return culled;
    }
    for shard in 0..store.shard_count() {
        let mut locked = store.lock_shard(shard);
        match cfg.policy {
            Policy::Unbounded | Policy::Clamp => unreachable!(),
            Policy::AgeOut => {
                let max = cfg.max_idle_age;
                culled.extend(locked.cull_while(now, |ages| ages[ages.len() - 1] > max));
            }
            Policy::IntegralBudget => {
                let budget = cfg.budget;
                culled.extend(locked.cull_while(now, |ages| ages.iter().sum::<Duration>() > budget));
            }
        }
    }
    culled
}
