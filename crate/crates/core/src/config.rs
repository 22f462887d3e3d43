//! Runtime configuration, including the `THREADCACHE*` environment variables.

use std::time::Duration;

use crate::retention::{ConfigError, Policy, RetentionConfig};

pub const ENV_ENABLE: &str = "THREADCACHE";
pub const ENV_POLICY: &str = "THREADCACHE_POLICY";
pub const ENV_CLAMP: &str = "THREADCACHE_CLAMP";
pub const ENV_AGE_MS: &str = "THREADCACHE_AGE_MS";
pub const ENV_BUDGET_MS: &str = "THREADCACHE_BUDGET_MS";
pub const ENV_REAP_MS: &str = "THREADCACHE_REAP_MS";
pub const ENV_RELEASE_MS: &str = "THREADCACHE_RELEASE_MS";

#[derive(Clone, Debug)]
pub struct RuntimeConfig {
    /// When false every spawn creates a physical thread and every finished
    /// task ends its thread.
    pub caching: bool,
    pub retention: RetentionConfig,
    /// Number of idle-store shards; workers are mapped by the CPU they finish on.
    pub shards: usize,
    /// Stack size of physical worker threads; `None` uses the std default.
    pub stack_size: Option<usize>,
    /// Keep a registry of live worker OS handles (see `Runtime::is_worker_thread`).
    pub track_native_handles: bool,
    /// Run before every task dispatched onto a recycled worker. Thread-local
    /// state is otherwise carried over from the previous task.
    pub reset_hooks: Vec<fn()>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            caching: true,
            retention: RetentionConfig::default(),
            shards: 1,
            stack_size: None,
            track_native_handles: false,
            reset_hooks: Vec::new(),
        }
    }
}

impl RuntimeConfig {
    pub fn uncached() -> Self {
        RuntimeConfig {
            caching: false,
            ..Self::default()
        }
    }

    pub fn with_retention(retention: RetentionConfig) -> Self {
        RuntimeConfig {
            retention,
            ..Self::default()
        }
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Builds a config from `THREADCACHE*` values supplied by `lookup`.
    /// Unset variables keep their defaults.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = RuntimeConfig::default();
        if let Some(v) = lookup(ENV_ENABLE) {
            cfg.caching = match v.trim() {
                "0" => false,
                "1" | "" => true,
                _ => return Err(invalid(ENV_ENABLE, &v)),
            };
        }
        let r = &mut cfg.retention;
        if let Some(v) = lookup(ENV_POLICY) {
            r.policy = match v.trim().to_ascii_lowercase().as_str() {
                "unbounded" => Policy::Unbounded,
                "clamp" => Policy::Clamp,
                "age" => Policy::AgeOut,
                "integral" => Policy::IntegralBudget,
                _ => return Err(invalid(ENV_POLICY, &v)),
            };
        }
        if let Some(v) = lookup(ENV_CLAMP) {
            r.clamp_size = parse(ENV_CLAMP, &v)? as usize;
        }
        if let Some(v) = lookup(ENV_AGE_MS) {
            r.max_idle_age = Duration::from_millis(parse(ENV_AGE_MS, &v)?);
        }
        if let Some(v) = lookup(ENV_BUDGET_MS) {
            r.budget = Duration::from_millis(parse(ENV_BUDGET_MS, &v)?);
        }
        if let Some(v) = lookup(ENV_REAP_MS) {
            r.reap_period = Duration::from_millis(parse(ENV_REAP_MS, &v)?);
        }
        if let Some(v) = lookup(ENV_RELEASE_MS) {
            r.release_after = Some(Duration::from_millis(parse(ENV_RELEASE_MS, &v)?));
        }
        r.validate()?;
        Ok(cfg)
    }
}

fn invalid(var: &'static str, value: &str) -> ConfigError {
    ConfigError::Invalid {
        var,
        value: value.to_owned(),
    }
}

fn parse(var: &'static str, value: &str) -> Result<u64, ConfigError> {
    value.trim().parse().map_err(|_| invalid(var, value))
}
