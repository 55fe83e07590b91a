//! Data-parallel execution helpers.
//!
//! Every kernel in the crate is written as "compute output slot `i` from
//! read-only inputs", so the same closure runs under rayon (feature
//! `parallel`) or in a plain loop. No helper here performs a cross-slot
//! reduction, which keeps parallel and sequential results bit-identical.
//!
//! The runtime switch [`set_parallel`] lets benchmarks compare both paths
//! inside a single binary.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Below this many scalar operations a kernel stays on the calling thread.
pub const MIN_PARALLEL_WORK: usize = 1 << 15;

/// Environment variable read by [`init_threads_from_env`].
pub const THREADS_ENV: &str = "SONCLUST_THREADS";

/// Enables or disables the rayon path at runtime. Has no effect without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Sizes the global rayon pool from `SONCLUST_THREADS` if it is set.
/// Returns the thread count that was applied, if any.
pub fn init_threads_from_env() -> Option<usize> {
    let threads = std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok()?;
    if threads == 0 {
        return None;
    }
    #[cfg(feature = "parallel")]
    {
        // A pool that is already initialized keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Some(threads)
}

#[cfg(feature = "parallel")]
#[inline]
fn go_parallel(work: usize) -> bool {
    parallel_enabled() && work >= MIN_PARALLEL_WORK
}

/// Calls `f(j, chunk)` for every `chunk_len`-sized chunk of `data`.
/// `work` is a rough operation count used to decide whether to fan out.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if go_parallel(work) {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(j, c)| f(j, c));
        return;
    }
    let _ = work;
    data.chunks_mut(chunk_len).enumerate().for_each(|(j, c)| f(j, c));
}

/// Calls `f(i, &mut slot)` for every element of `slots`.
pub fn for_each_mut<T, F>(slots: &mut [T], work: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(work) {
        slots.par_iter_mut().enumerate().for_each(|(i, s)| f(i, s));
        return;
    }
    let _ = work;
    slots.iter_mut().enumerate().for_each(|(i, s)| f(i, s));
}

/// Collects `f(0), ..., f(len - 1)` in index order.
pub fn map_range<T, F>(len: usize, work: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(work) {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = work;
    (0..len).map(f).collect()
}
