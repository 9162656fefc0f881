//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops (independent anneal reads, Gibbs chains, per-sample gradients,
//! SSIM probe scans) map an index range to values. Results are always
//! collected in index order, so the parallel and sequential paths produce
//! bit-identical output; `Sequential` exists for benchmarking and for builds
//! without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Use the rayon thread pool when the `parallel` feature is enabled.
    Auto,
    /// Force a single-threaded loop.
    Sequential,
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Auto
    }
}

/// Map `0..n` through `f`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match mode {
        Parallelism::Sequential => (0..n).map(f).collect(),
        Parallelism::Auto => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Fixed chunk width used when summing per-item contributions.
///
/// Items are grouped into chunks of this size; each chunk is summed
/// sequentially and chunk sums are folded in chunk order, so the result does
/// not depend on the number of worker threads.
pub const SUM_CHUNK: usize = 16;

/// Sum `f(i)` over `0..n` with a fixed, thread-count-independent reduction
/// order. `add` folds the right-hand value into the left accumulator.
pub fn sum_indexed<T, F, A>(n: usize, mode: Parallelism, f: F, add: A) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    A: Fn(&mut T, T),
{
    if n == 0 {
        return None;
    }
    let n_chunks = n.div_ceil(SUM_CHUNK);
    let chunk_sums = map_indexed(n_chunks, mode, |c| {
        let start = c * SUM_CHUNK;
        let end = (start + SUM_CHUNK).min(n);
        let mut acc = f(start);
        for i in start + 1..end {
            add(&mut acc, f(i));
        }
        acc
    });
    let mut it = chunk_sums.into_iter();
    let mut total = it.next().expect("n > 0");
    for s in it {
        add(&mut total, s);
    }
    Some(total)
}
