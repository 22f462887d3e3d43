use std::time::Duration;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use threadcache::clock::Nanos;
use threadcache::idle_store::IdleStore;
use threadcache::retention::{self, RetentionConfig};
use threadcache::testkit::oracle::{self, check_post_reap, check_script, random_script, store_state, Model};
use threadcache::testkit::{node, Node};

const S: u64 = 1_000_000_000;

#[test]
fn integral_of_three_workers() {
    let store = IdleStore::new();
    for (id, since) in [(1, 5 * S), (2, 7 * S), (3, 9 * S)] {
        store.push(node(id), Nanos(since));
    }
    assert_eq!(store.integral(Nanos(10 * S)), Duration::from_secs(9));
}

#[test]
fn model_agrees_on_budget_example() {
    let mut model = Model::new(RetentionConfig::integral_budget(Duration::from_secs(4)), 1);
    for (id, since) in [(1, 5 * S), (2, 7 * S), (3, 9 * S)] {
        model.push(0, id, since);
    }
    assert_eq!(model.reap(10 * S), vec![1]);
}

#[test]
fn model_agrees_on_age_boundary() {
    let mut model = Model::new(RetentionConfig::age_out(Duration::from_secs(10)), 1);
    model.push(0, 1, 0);
    model.push(0, 2, S);
    assert_eq!(model.reap(10 * S), Vec::<u64>::new());
    assert_eq!(model.reap(11 * S), vec![1]);
}

#[test]
fn two_thousand_seeded_scripts_match_the_model() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for _ in 0..2000 {
        let script = random_script(&mut rng);
        if let Err(e) = check_script(&script) {
            panic!("{e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn store_and_model_agree(seed in any::<u64>()) {
        let script = random_script(&mut StdRng::seed_from_u64(seed));
        prop_assert!(check_script(&script).is_ok(), "{}", check_script(&script).unwrap_err());
    }

    #[test]
    fn reap_postconditions(
        gaps in prop::collection::vec(0u64..5, 0..40),
        extra in 0u64..20,
        limit in 0u64..30,
        age_policy in any::<bool>(),
    ) {
        let tick = 1_000_000u64;
        let cfg = if age_policy {
            RetentionConfig::age_out(Duration::from_nanos((limit + 1) * tick))
        } else {
            RetentionConfig::integral_budget(Duration::from_nanos(limit * tick))
        };
        let store = IdleStore::<Node>::new();
        let mut t = 0;
        for (i, g) in gaps.iter().enumerate() {
            t += g * tick;
            store.push(node(i as u64), Nanos(t));
        }
        let now = t + extra * tick;
        let before = store_state(&store);
        let culled = retention::reap(&store, Nanos(now), &cfg);
        let after = store_state(&store);
        prop_assert_eq!(culled.len() + after[0].len(), before[0].len());
        let res = check_post_reap(&cfg, now, &before, &after);
        prop_assert!(res.is_ok(), "{}", res.unwrap_err());
    }

    #[test]
    fn clamp_holds_after_every_push(size in 0usize..6, pushes in 0usize..30, refuse in any::<bool>()) {
        let cfg = RetentionConfig {
            clamp_mode: if refuse {
                threadcache::ClampMode::RefuseIncoming
            } else {
                threadcache::ClampMode::EvictOldest
            },
            ..RetentionConfig::clamp(size)
        };
        let store = IdleStore::<Node>::new();
        let mut cached = 0;
        for i in 0..pushes {
            let d = retention::admit(&store, 0, &cfg);
            if d.verdict == retention::Verdict::Cache {
                store.push(node(i as u64), Nanos(i as u64));
                retention::trim(&store, 0, &cfg);
                cached += 1;
            }
            prop_assert!(store.len() <= size);
        }
        prop_assert_eq!(store.len(), cached.min(size));
    }
}

#[test]
fn random_config_covers_every_policy() {
    let mut rng = StdRng::seed_from_u64(1);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..200 {
        seen.insert(format!("{:?}", oracle::random_config(&mut rng).policy));
    }
    assert_eq!(seen.len(), 4);
}
