//! Data-parallel map over path indices.
//!
//! With the default `parallel` feature the map runs on the rayon pool;
//! without it the sequential body below is used. Results are collected in
//! index order either way, so aggregation downstream is deterministic and
//! bit-identical across both modes and any thread count.

/// Apply `f` to every index in `0..count`, collecting results in order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Apply `f` to every index in `0..count`, collecting results in order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map_indexed_sequential(count, f)
}

/// Sequential reference implementation, always available. The benchmark
/// suite compares it against the rayon-backed map on identical workloads.
pub fn map_indexed_sequential<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Cap the rayon pool at `threads` workers. Must be called before the pool
/// is first used; later calls return an error from rayon and are reported as
/// a plain string. A no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Cap the rayon pool at `threads` workers. Must be called before the pool
/// is first used; later calls return an error from rayon and are reported as
/// a plain string. A no-op without the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> Result<(), String> {
    Ok(())
}
