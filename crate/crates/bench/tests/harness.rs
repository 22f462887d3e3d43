use std::process::Command;
use std::time::Duration;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use threadcache_bench::{
    median_of, parse_csv, run_forkjoin_bench, run_spawn_bench, run_sweep, BenchConfig, Mode, Workload,
};

fn quick(workload: Workload) -> BenchConfig {
    BenchConfig {
        workload,
        duration: Duration::from_millis(60),
        runs: 3,
        keys: 50_000,
        cutoff: 2048,
        ..BenchConfig::default()
    }
}

/// Independent median: the value with at least half the samples on each side.
fn median_by_rank(values: &[f64]) -> f64 {
    let half = values.len() / 2;
    *values
        .iter()
        .find(|&&v| {
            values.iter().filter(|&&w| w < v).count() <= half && values.iter().filter(|&&w| w > v).count() <= half
        })
        .unwrap()
}

#[test]
fn median_of_seeded_samples_matches_sort() {
    let mut rng = StdRng::seed_from_u64(2024);
    let samples: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..1e6)).collect();
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(median_of(&samples).unwrap(), sorted[3]);
}

proptest! {
    #[test]
    fn median_has_half_on_each_side(v in prop::collection::vec(-1e9f64..1e9, 0..40)) {
        if v.len() % 2 == 1 {
            prop_assert_eq!(median_of(&v).unwrap(), median_by_rank(&v));
        } else {
            prop_assert!(median_of(&v).is_err());
        }
    }
}

#[test]
fn sweep_grid_rows_and_round_trip() {
    let cfg = quick(Workload::Spawn);
    let mut buf = Vec::new();
    let points = run_sweep(&cfg, &[Mode::Default, Mode::Cached], &[1, 2, 4], &mut buf).unwrap();
    assert_eq!(points.len(), 6);
    let rows = parse_csv(buf.as_slice()).unwrap();
    let data: Vec<_> = rows.iter().filter(|r| r.run != "median").collect();
    let medians: Vec<_> = rows.iter().filter(|r| r.run == "median").collect();
    assert_eq!(data.len(), 2 * 3 * 3);
    assert_eq!(medians.len(), 6);
    for m in &medians {
        let values: Vec<f64> = data
            .iter()
            .filter(|r| r.mode == m.mode && r.creators == m.creators)
            .map(|r| r.value)
            .collect();
        assert_eq!(values.len(), 3);
        assert_eq!(median_by_rank(&values), m.value);
        assert_eq!(m.unit, "threads/s");
    }
    for p in &points {
        assert!(p.failures.is_empty(), "{:?}", p.failures);
    }
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("workload,mode,creators,run,value,unit\n"));
}

#[test]
fn cached_spawn_accounting() {
    for creators in [1, 3] {
        let cfg = BenchConfig {
            creators,
            duration: Duration::from_millis(300),
            ..quick(Workload::Spawn)
        };
        let r = run_spawn_bench(&cfg, Mode::Cached, 0).unwrap();
        r.check().unwrap();
        let s = r.after;
        assert_eq!(s.spawns_total, s.cache_hits + s.physical_creates);
        assert!(s.hit_rate() > 0.99, "hit rate {}", s.hit_rate());
        assert!(s.physical_creates <= 2 * creators as u64);
        assert!(r.interval().spawns_total > 0);
    }
}

#[test]
fn default_mode_never_hits() {
    let r = run_spawn_bench(&quick(Workload::Spawn), Mode::Default, 0).unwrap();
    r.check().unwrap();
    assert_eq!(r.after.cache_hits, 0);
    assert_eq!(r.after.physical_creates, r.after.spawns_total);
}

#[test]
fn forkjoin_sorted_in_both_modes() {
    for mode in [Mode::Default, Mode::Cached] {
        let r = run_forkjoin_bench(&quick(Workload::Forkjoin), mode, 0).unwrap();
        r.check().unwrap();
        assert_eq!(r.unit(), "ms");
        assert!(r.after.spawns_total > 0);
    }
}

#[test]
fn cli_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["--workload", "deferred", "--duration", "0.05", "--runs", "1", "--sweep", "1,2"])
        .arg("--csv")
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = parse_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.workload == "deferred" && r.value > 0.0));
}

#[test]
fn cli_rejects_even_runs() {
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["--runs", "4", "--duration", "0.01"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("odd"));
}
