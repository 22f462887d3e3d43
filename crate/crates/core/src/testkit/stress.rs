//! Concurrent stress of the idle store with history-based checks.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use super::{node, Node};
use crate::clock::Nanos;
use crate::idle_store::IdleStore;

/// Operation interval on a global logical clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug)]
pub struct StressReport {
    pub pushes: usize,
    pub pops: usize,
    pub empty_pops: usize,
    /// Ids left in the store after all threads stopped.
    pub drained: usize,
}

fn id_of(pusher: usize, seq: usize) -> u64 {
    ((pusher as u64) << 32) | seq as u64
}

/// `pushers` threads push `per_pusher` distinct ids each while `poppers`
/// threads pop until every id has been taken. Verifies that every id is
/// popped exactly once and that no pop order contradicts LIFO for any two
/// ids pushed by the same thread.
pub fn run(pushers: usize, poppers: usize, per_pusher: usize) -> Result<StressReport, String> {
    let store = Arc::new(IdleStore::<Node>::new());
    let clock = Arc::new(AtomicU64::new(0));
    let total = pushers * per_pusher;
    let taken = Arc::new(AtomicUsize::new(0));
    let barrier = Arc::new(Barrier::new(pushers + poppers));

    let push_threads: Vec<_> = (0..pushers)
        .map(|p| {
            let (store, clock, barrier) = (store.clone(), clock.clone(), barrier.clone());
            thread::spawn(move || {
                let mut spans = Vec::with_capacity(per_pusher);
                barrier.wait();
                for seq in 0..per_pusher {
                    let start = clock.fetch_add(1, Ordering::SeqCst);
                    store.push(node(id_of(p, seq)), Nanos(start));
                    let end = clock.fetch_add(1, Ordering::SeqCst);
                    spans.push(Span { start, end });
                }
                spans
            })
        })
        .collect();
    let pop_threads: Vec<_> = (0..poppers)
        .map(|_| {
            let (store, clock, barrier, taken) = (store.clone(), clock.clone(), barrier.clone(), taken.clone());
            thread::spawn(move || {
                let mut got = Vec::new();
                let mut empty = 0;
                barrier.wait();
                while taken.load(Ordering::Relaxed) < total {
                    let start = clock.fetch_add(1, Ordering::SeqCst);
                    let popped = store.pop();
                    let end = clock.fetch_add(1, Ordering::SeqCst);
                    match popped {
                        Some(n) => {
                            taken.fetch_add(1, Ordering::Relaxed);
                            got.push((n.id, Span { start, end }));
                        }
                        None => {
                            empty += 1;
                            thread::yield_now();
                        }
                    }
                }
                (got, empty)
            })
        })
        .collect();

    let push_spans: Vec<Vec<Span>> = push_threads.into_iter().map(|h| h.join().unwrap()).collect();
    let mut pop_spans = HashMap::with_capacity(total);
    let mut empty_pops = 0;
    let mut pops = 0;
    for h in pop_threads {
        let (got, empty) = h.join().unwrap();
        empty_pops += empty;
        pops += got.len();
        for (id, span) in got {
            if pop_spans.insert(id, span).is_some() {
                return Err(format!("id {id:#x} popped twice"));
            }
        }
    }
    let mut drained = 0;
    while let Some(n) = store.pop() {
        drained += 1;
        if pop_spans.insert(n.id, Span { start: u64::MAX, end: u64::MAX }).is_some() {
            return Err(format!("id {:#x} popped twice", n.id));
        }
    }
    if pop_spans.len() != total {
        return Err(format!("{} ids pushed, {} popped", total, pop_spans.len()));
    }
    for (p, spans) in push_spans.iter().enumerate() {
        let pops: Vec<Span> = (0..per_pusher).map(|s| pop_spans[&id_of(p, s)]).collect();
        check_lifo_pairs(spans, &pops).map_err(|(a, b)| {
            format!("pusher {p}: id {a} popped while later id {b} was certainly above it")
        })?;
    }
    Ok(StressReport {
        pushes: total,
        pops,
        empty_pops,
        drained,
    })
}

/// For ids pushed in order by one thread, reports a pair `(a, b)`, `a < b`,
/// where `b` was fully pushed before `pop(a)` began and was not popped until
/// after `pop(a)` ended. A LIFO store cannot produce that.
pub fn check_lifo_pairs(push: &[Span], pop: &[Span]) -> Result<(), (usize, usize)> {
    let n = push.len();
    // Sparse table of argmax of pop[b].start over ranges of b.
    let mut table: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut width = 1;
    while 2 * width <= n {
        let prev = table.last().unwrap();
        let next = (0..=n - 2 * width)
            .map(|i| {
                let (l, r) = (prev[i], prev[i + width]);
                if pop[l].start >= pop[r].start { l } else { r }
            })
            .collect();
        table.push(next);
        width *= 2;
    }
    let argmax = |lo: usize, hi: usize| {
        let level = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        let (l, r) = (table[level][lo], table[level][hi + 1 - (1 << level)]);
        if pop[l].start >= pop[r].start { l } else { r }
    };
    for a in 0..n {
        // Pushes by one thread end in increasing order.
        let last = push.partition_point(|s| s.end < pop[a].start);
        if last <= a + 1 {
            continue;
        }
        let b = argmax(a + 1, last - 1);
        if pop[b].start > pop[a].end {
            return Err((a, b));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Push(u64),
    Pop(Option<u64>),
}

/// Whether a history of completed operations has a linearization that is a
/// legal sequential stack history. Exhaustive; keep histories small.
pub fn linearizable(history: &[(Op, Span)]) -> bool {
    fn search(history: &[(Op, Span)], done: &mut Vec<bool>, stack: &mut Vec<u64>) -> bool {
        if done.iter().all(|&d| d) {
            return true;
        }
        // Earliest end among pending ops: anything starting after it cannot
        // go next.
        let horizon = history
            .iter()
            .zip(done.iter())
            .filter(|(_, &d)| !d)
            .map(|((_, s), _)| s.end)
            .min()
            .unwrap();
        for i in 0..history.len() {
            if done[i] || history[i].1.start > horizon {
                continue;
            }
            let ok = match history[i].0 {
                Op::Push(v) => {
                    stack.push(v);
                    true
                }
                Op::Pop(expected) => {
                    if stack.last().copied() == expected {
                        if expected.is_some() {
                            stack.pop();
                        }
                        true
                    } else {
                        false
                    }
                }
            };
            if ok {
                done[i] = true;
                if search(history, done, stack) {
                    return true;
                }
                done[i] = false;
                match history[i].0 {
                    Op::Push(_) => {
                        stack.pop();
                    }
                    Op::Pop(Some(v)) => stack.push(v),
                    Op::Pop(None) => {}
                }
            }
        }
        false
    }
    search(history, &mut vec![false; history.len()], &mut Vec::new())
}

/// Runs `threads` threads each doing `ops` random push/pop operations on a
/// fresh store and returns the recorded history.
pub fn record_history(threads: usize, ops: usize, seed: u64) -> Vec<(Op, Span)> {
    use rand::{Rng, SeedableRng};
    let store = Arc::new(IdleStore::<Node>::new());
    let clock = Arc::new(AtomicU64::new(0));
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let (store, clock, barrier) = (store.clone(), clock.clone(), barrier.clone());
            thread::spawn(move || {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed ^ (t as u64) << 40);
                let mut out = Vec::new();
                barrier.wait();
                for k in 0..ops {
                    let push = rng.gen_bool(0.6);
                    let start = clock.fetch_add(1, Ordering::SeqCst);
                    let op = if push {
                        let id = id_of(t, k);
                        store.push(node(id), Nanos(start));
                        Op::Push(id)
                    } else {
                        Op::Pop(store.pop().map(|n| n.id))
                    };
                    let end = clock.fetch_add(1, Ordering::SeqCst);
                    out.push((op, Span { start, end }));
                }
                out
            })
        })
        .collect();
    handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
}
