//! Scalar model of the idle store under each retention policy.

use std::fmt::Write as _;
use std::time::Duration;

use rand::Rng;

use super::{node, Node};
use crate::clock::Nanos;
use crate::idle_store::IdleStore;
use crate::retention::{self, ClampMode, Policy, RetentionConfig, Verdict};

/// Millisecond grid; all generated instants and limits are multiples of it,
/// so ages land exactly on limits often.
const TICK: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub enum Event {
    Push { shard: usize, at: u64 },
    Pop { shard: usize },
    Reap { at: u64 },
}

#[derive(Clone, Debug)]
pub struct Script {
    pub cfg: RetentionConfig,
    pub shards: usize,
    pub events: Vec<Event>,
}

pub fn random_config(rng: &mut impl Rng) -> RetentionConfig {
    match rng.gen_range(0..4) {
        0 => RetentionConfig::unbounded(),
        1 => RetentionConfig {
            clamp_mode: if rng.gen_bool(0.3) {
                ClampMode::RefuseIncoming
            } else {
                ClampMode::EvictOldest
            },
            ..RetentionConfig::clamp(rng.gen_range(0..6))
        },
        2 => RetentionConfig::age_out(Duration::from_nanos(rng.gen_range(1..12) * TICK)),
        _ => RetentionConfig::integral_budget(Duration::from_nanos(rng.gen_range(0..40) * TICK)),
    }
}

pub fn random_script(rng: &mut impl Rng) -> Script {
    let shards = rng.gen_range(1..=3);
    let len = rng.gen_range(1..=60);
    let mut clock = 0u64;
    let mut events = Vec::with_capacity(len);
    for _ in 0..len {
        clock += rng.gen_range(0..4) * TICK;
        let shard = rng.gen_range(0..shards);
        events.push(match rng.gen_range(0..10) {
            0..=5 => Event::Push { shard, at: clock },
            6 | 7 => Event::Pop { shard },
            _ => Event::Reap { at: clock },
        });
    }
    Script {
        cfg: random_config(rng),
        shards,
        events,
    }
}

/// One shard of the model: `(id, idle_since)` pairs, oldest first.
#[derive(Clone, Debug, Default)]
pub struct ModelShard {
    pub entries: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PushOutcome {
    Cached { evicted: Vec<u64> },
    Refused,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: RetentionConfig,
    pub shards: Vec<ModelShard>,
}

impl Model {
    pub fn new(cfg: RetentionConfig, shards: usize) -> Self {
        Model {
            cfg,
            shards: vec![ModelShard::default(); shards],
        }
    }

    pub fn push(&mut self, shard: usize, id: u64, at: u64) -> PushOutcome {
        let entries = &mut self.shards[shard].entries;
        let mut evicted = Vec::new();
        if self.cfg.policy == Policy::Clamp {
            let cap = self.cfg.clamp_size;
            if cap == 0 {
                return PushOutcome::Refused;
            }
            if entries.len() >= cap {
                if self.cfg.clamp_mode == ClampMode::RefuseIncoming {
                    return PushOutcome::Refused;
                }
                let excess = entries.len() + 1 - cap;
                evicted = entries.drain(..excess).map(|e| e.0).collect();
            }
        }
        entries.push((id, at));
        PushOutcome::Cached { evicted }
    }

    pub fn pop(&mut self, shard: usize) -> Option<u64> {
        self.shards[shard].entries.pop().map(|e| e.0)
    }

    /// Culled ids, oldest first within each shard, shards in index order.
    pub fn reap(&mut self, at: u64) -> Vec<u64> {
        let mut culled = Vec::new();
        for shard in &mut self.shards {
            let entries = &shard.entries;
            let k = match self.cfg.policy {
                Policy::Unbounded | Policy::Clamp => 0,
                Policy::AgeOut => {
                    let max = self.cfg.max_idle_age.as_nanos() as u64;
                    entries
                        .iter()
                        .position(|&(_, since)| at - since <= max)
                        .unwrap_or(entries.len())
                }
                Policy::IntegralBudget => {
                    let budget = self.cfg.budget.as_nanos() as u64;
                    (0..=entries.len())
                        .find(|&k| entries[k..].iter().map(|&(_, s)| at - s).sum::<u64>() <= budget)
                        .unwrap()
                }
            };
            culled.extend(shard.entries.drain(..k).map(|e| e.0));
        }
        culled
    }
}

/// Per shard, `(id, idle_since)` oldest first, as read back from the store.
pub fn store_state(store: &IdleStore<Node>) -> Vec<Vec<(u64, u64)>> {
    (0..store.shard_count())
        .map(|s| {
            let locked = store.lock_shard(s);
            let mut v: Vec<_> = locked
                .snapshot()
                .iter()
                .map(|o| (o.entry().id, o.idle_since.0))
                .collect();
            v.reverse();
            v
        })
        .collect()
}

/// Checks the post-conditions of a reap pass directly: every shard is within
/// its limit, culling took the oldest entries, and no fewer would have done.
pub fn check_post_reap(
    cfg: &RetentionConfig,
    at: u64,
    before: &[Vec<(u64, u64)>],
    after: &[Vec<(u64, u64)>],
) -> Result<(), String> {
    for (s, (pre, post)) in before.iter().zip(after).enumerate() {
        let culled = pre.len() - post.len();
        if pre[culled..] != post[..] {
            return Err(format!("shard {s}: survivors are not the youngest suffix"));
        }
        let age = |e: &(u64, u64)| at - e.1;
        match cfg.policy {
            Policy::Unbounded | Policy::Clamp => {
                if culled != 0 {
                    return Err(format!("shard {s}: count policy culled on reap"));
                }
            }
            Policy::AgeOut => {
                let max = cfg.max_idle_age.as_nanos() as u64;
                if let Some(e) = post.iter().find(|e| age(e) > max) {
                    return Err(format!("shard {s}: survivor {} aged {} > {max}", e.0, age(e)));
                }
                if let Some(e) = pre[..culled].iter().find(|e| age(e) <= max) {
                    return Err(format!("shard {s}: culled {} aged {} within limit", e.0, age(e)));
                }
            }
            Policy::IntegralBudget => {
                let budget = cfg.budget.as_nanos() as u64;
                let total: u64 = post.iter().map(age).sum();
                if total > budget {
                    return Err(format!("shard {s}: integral {total} > budget {budget}"));
                }
                if culled > 0 && total + age(&pre[culled - 1]) <= budget {
                    return Err(format!("shard {s}: culled more than needed"));
                }
            }
        }
    }
    Ok(())
}

/// Replays `script` against the real store and the model in lockstep.
pub fn check_script(script: &Script) -> Result<(), String> {
    let store = IdleStore::<Node>::with_shards(script.shards);
    let mut model = Model::new(script.cfg.clone(), script.shards);
    let cfg = &script.cfg;
    let mut next_id = 1;
    let mut log = String::new();
    let fail = |log: &str, msg: String| Err(format!("{msg}\nconfig {cfg:?}\n{log}"));
    for event in &script.events {
        let _ = writeln!(log, "{event:?}");
        match *event {
            Event::Push { shard, at } => {
                let id = next_id;
                next_id += 1;
                let expected = model.push(shard, id, at);
                let decision = retention::admit(&store, shard, cfg);
                let got = match decision.verdict {
                    Verdict::Terminate => PushOutcome::Refused,
                    Verdict::Cache => {
                        store.push_to(shard, node(id), Nanos(at));
                        let mut evicted: Vec<u64> = decision.evictions.iter().map(|n| n.id).collect();
                        evicted.extend(retention::trim(&store, shard, cfg).iter().map(|n| n.id));
                        PushOutcome::Cached { evicted }
                    }
                };
                if got != expected {
                    return fail(&log, format!("push: got {got:?}, model {expected:?}"));
                }
            }
            Event::Pop { shard } => {
                let got = store.pop_from(shard).map(|n| n.id);
                let expected = model.pop(shard);
                if got != expected {
                    return fail(&log, format!("pop: got {got:?}, model {expected:?}"));
                }
            }
            Event::Reap { at } => {
                let before = store_state(&store);
                let got: Vec<u64> = retention::reap(&store, Nanos(at), cfg).iter().map(|n| n.id).collect();
                let expected = model.reap(at);
                if got != expected {
                    return fail(&log, format!("reap at {at}: got {got:?}, model {expected:?}"));
                }
                if let Err(e) = check_post_reap(cfg, at, &before, &store_state(&store)) {
                    return fail(&log, e);
                }
            }
        }
        let state = store_state(&store);
        let expected: Vec<_> = model.shards.iter().map(|s| s.entries.clone()).collect();
        if state != expected {
            return fail(&log, format!("state diverged: store {state:?}, model {expected:?}"));
        }
        if cfg.policy == Policy::Clamp && state.iter().any(|s| s.len() > cfg.clamp_size) {
            return fail(&log, "clamp exceeded".into());
        }
    }
    Ok(())
}
