//! Element-parallel helpers with a sequential fallback.
//!
//! All hot loops (assembly, energy reductions, indicator evaluation) are
//! expressed as indexed maps over elements followed by a fixed-shape pairwise
//! reduction. Contributions are collected in element order and reduced over a
//! fixed tree, so results are bitwise identical for any thread count and for
//! the sequential fallback compiled without the `parallel` feature.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Enables or disables data-parallel element loops at runtime.
///
/// Has no effect when the crate is built without the `parallel` feature;
/// everything then runs on the sequential fallback.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

/// Whether element loops currently run on the rayon pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Indexed map over `0..n`, collected in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Indexed map writing into an existing buffer, allocation-free.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// Sums a slice over a fixed pairwise tree.
///
/// The tree shape depends only on the slice length, never on the thread
/// count, which keeps reductions reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 64;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Maps `0..n` through `f` and pairwise-sums the results.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts = map_indexed(n, f);
    pairwise_sum(&parts)
}

/// Dot product with the same fixed reduction tree as [`pairwise_sum`].
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const CHUNK: usize = 1024;
    if a.len() <= CHUNK {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        return acc;
    }
    let n_chunks = a.len().div_ceil(CHUNK);
    let parts = map_indexed(n_chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(a.len());
        let mut acc = 0.0;
        for i in lo..hi {
            acc += a[i] * b[i];
        }
        acc
    });
    pairwise_sum(&parts)
}
