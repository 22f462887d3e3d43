//! Fork-join merge sort that spawns a logical thread per subproblem.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use threadcache::Runtime;

use crate::{BenchConfig, BenchError, BenchResult, Mode, Workload};

pub fn random_keys(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

pub fn is_sorted(v: &[u64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Disjoint region of a buffer owned by one subproblem.
#[derive(Clone, Copy)]
struct Region {
    ptr: *mut u64,
    len: usize,
}

// SAFETY: regions handed to other threads never overlap, and every spawned
// subproblem is joined before its parent touches the region again.
unsafe impl Send for Region {}

impl Region {
    fn split(self, at: usize) -> (Region, Region) {
        let right = Region {
            // SAFETY: at <= len.
            ptr: unsafe { self.ptr.add(at) },
            len: self.len - at,
        };
        (Region { ptr: self.ptr, len: at }, right)
    }

    unsafe fn slice<'a>(self) -> &'a mut [u64] {
        std::slice::from_raw_parts_mut(self.ptr, self.len)
    }
}

/// Sorts `v`, spawning the left half of every subproblem longer than
/// `cutoff` onto `rt`.
pub fn parallel_sort(rt: &Arc<Runtime>, v: &mut [u64], cutoff: usize) -> Result<(), BenchError> {
    let mut scratch = vec![0u64; v.len()];
    let data = Region {
        ptr: v.as_mut_ptr(),
        len: v.len(),
    };
    let tmp = Region {
        ptr: scratch.as_mut_ptr(),
        len: scratch.len(),
    };
    sort_region(rt, data, tmp, cutoff.max(1)).map_err(BenchError::Gate)
}

fn sort_region(rt: &Arc<Runtime>, data: Region, tmp: Region, cutoff: usize) -> Result<(), String> {
    if data.len <= cutoff {
        // SAFETY: this subproblem owns `data`.
        unsafe { data.slice() }.sort_unstable();
        return Ok(());
    }
    let mid = data.len / 2;
    let (left, right) = data.split(mid);
    let (left_tmp, right_tmp) = tmp.split(mid);
    let child_rt = rt.clone();
    let handle = rt
        .spawn(move || match sort_region(&child_rt, left, left_tmp, cutoff) {
            Ok(()) => 0,
            Err(_) => 1,
        })
        .map_err(|e| format!("spawn: {e}"))?;
    let right_result = sort_region(rt, right, right_tmp, cutoff);
    let left_result = match handle.join() {
        Ok(status) if status.value() == 0 => Ok(()),
        Ok(_) => Err("subproblem failed".to_string()),
        Err(e) => Err(format!("join: {e}")),
    };
    right_result.and(left_result)?;
    // SAFETY: both halves are sorted and no other thread holds them now.
    unsafe { merge(left.slice(), right.slice(), tmp.slice()) };
    unsafe { data.slice() }.copy_from_slice(unsafe { tmp.slice() });
    Ok(())
}

fn merge(a: &[u64], b: &[u64], out: &mut [u64]) {
    let (mut i, mut j) = (0, 0);
    for slot in out.iter_mut() {
        if j == b.len() || (i < a.len() && a[i] <= b[j]) {
            *slot = a[i];
            i += 1;
        } else {
            *slot = b[j];
            j += 1;
        }
    }
}

fn checksum(v: &[u64]) -> (u64, u64) {
    v.iter().fold((0u64, 0u64), |(s, x), &k| (s.wrapping_add(k), x ^ k.rotate_left(17)))
}

/// One timed sort of `cfg.keys` keys. Fails if the output is not a sorted
/// permutation of the input.
pub fn run_forkjoin_bench(cfg: &BenchConfig, mode: Mode, run_index: usize) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let rt = Arc::new(cfg.runtime(mode)?);
    let mut keys = random_keys(cfg.keys, cfg.seed.wrapping_add(run_index as u64));
    let sum = checksum(&keys);
    let before = rt.stats();
    let t0 = Instant::now();
    parallel_sort(&rt, &mut keys, cfg.cutoff)?;
    let elapsed = t0.elapsed();
    let after = rt.stats();
    if !is_sorted(&keys) || checksum(&keys) != sum {
        return Err(BenchError::Gate(format!("{mode} run {run_index}: output is not sorted")));
    }
    Ok(BenchResult {
        workload: Workload::Forkjoin,
        mode,
        creators: cfg.creators,
        run_index,
        value: elapsed.as_secs_f64() * 1e3,
        before,
        after,
        creates_by_half: (0, 0),
    })
}
