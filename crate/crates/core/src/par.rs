//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! rayon pool; without it every call runs sequentially. Outputs are identical
//! either way: order-preserving collects and associative reductions only.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Inputs smaller than this run sequentially even in parallel mode.
pub const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    fn parallel_for(self, n: usize) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel && n >= PARALLEL_THRESHOLD
    }
}

/// Indices in `0..n` for which `pred` holds, ascending.
pub fn filter_indices<F>(n: usize, exec: Execution, pred: F) -> Vec<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.parallel_for(n) {
        return (0..n).into_par_iter().filter(|&i| pred(i)).collect();
    }
    let _ = exec;
    (0..n).filter(|&i| pred(i)).collect()
}

/// Order-preserving map.
pub fn map_collect<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.parallel_for(items.len()) {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fold over `items` with per-worker accumulators combined by `reduce`.
///
/// `reduce` must be associative and commutative for results to match the
/// sequential path.
pub fn fold_reduce<T, A, I, F, R>(items: &[T], exec: Execution, init: I, fold: F, reduce: R) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.parallel_for(items.len()) {
        return items.par_iter().fold(&init, &fold).reduce(&init, &reduce);
    }
    let _ = (exec, &reduce);
    items.iter().fold(init(), fold)
}
