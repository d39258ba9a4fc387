//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over rayon's pool;
//! without it, or when the process-wide mode is [`ExecMode::Sequential`], the
//! same closures run in order on the calling thread. Reductions always split
//! the input into fixed-size chunks and combine the chunk results in index
//! order, so both modes give bitwise-identical floating-point results.

use std::sync::atomic::{AtomicU8, Ordering};

/// Rows per chunk for chunked reductions.
pub const CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

pub fn set_exec_mode(mode: ExecMode) {
    MODE.store(matches!(mode, ExecMode::Parallel) as u8, Ordering::Relaxed);
}

/// Effective mode: `Parallel` only when the feature is compiled in.
pub fn exec_mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Configures the global worker pool. Only the first call has any effect.
pub fn init_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

/// Order-preserving map over `0..n`.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec_mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indices(items.len(), |i| f(&items[i]))
}

/// Maps each `CHUNK_ROWS`-row range of `0..n` and returns the per-chunk
/// results in chunk order.
pub fn map_chunks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK_ROWS);
    map_indices(chunks, |c| {
        let start = c * CHUNK_ROWS;
        f(start..(start + CHUNK_ROWS).min(n))
    })
}

/// Fills `out`, which holds `stride` values per row, chunk by chunk: `f`
/// receives each `CHUNK_ROWS`-row range and the matching output slice.
pub fn fill_chunks<T, F>(out: &mut [T], stride: usize, f: F)
where
    T: Send,
    F: Fn(std::ops::Range<usize>, &mut [T]) + Sync + Send,
{
    let stride = stride.max(1);
    let n = out.len() / stride;
    let run = |(c, dst): (usize, &mut [T])| {
        let start = c * CHUNK_ROWS;
        f(start..(start + CHUNK_ROWS).min(n), dst)
    };
    #[cfg(feature = "parallel")]
    if exec_mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK_ROWS * stride).enumerate().for_each(run);
        return;
    }
    out.chunks_mut(CHUNK_ROWS * stride).enumerate().for_each(run);
}

/// Chunked sum of per-row vectors of length `len`, combined in chunk order.
pub fn sum_rows<F>(n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let partials = map_chunks(n, |range| {
        let mut acc = vec![0.0; len];
        f(range, &mut acc);
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
