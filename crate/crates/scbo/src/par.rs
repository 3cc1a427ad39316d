//! Data-parallel map with a sequential fallback.
//!
//! With the default `parallel` feature the closures run on the rayon pool;
//! without it they run on the calling thread. Results are collected in index
//! order either way, so the two paths are output-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..n` and returns the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential twin of [`map_indexed`], always available; the benchmark suite
/// uses it as the baseline when comparing against the parallel path.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. Call once, before any parallel work; a
/// second call fails because the pool is already built. Pool size only
/// affects scheduling, never results.
#[cfg(feature = "parallel")]
pub fn configure_pool(threads: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::Config(format!("worker pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_pool(_threads: usize) -> crate::Result<()> {
    Ok(())
}
