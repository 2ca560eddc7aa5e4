//! Data-parallel helpers with a sequential fallback.
//!
//! Callers pick an [`Exec`] at run time. Without the `parallel` feature both
//! variants run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `items.map(f)` preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Folds chunks of `items` into accumulators made by `init`, then merges
/// them with `merge`. The merge must be associative and commutative for the
/// parallel and sequential results to agree.
pub fn fold<T, A, I, F, M>(exec: Exec, items: &[T], init: I, step: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &T) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items
            .par_chunks(1024)
            .map(|chunk| {
                let mut acc = init();
                for item in chunk {
                    step(&mut acc, item);
                }
                acc
            })
            .reduce(&init, &merge);
    }
    let _ = (exec, &merge);
    let mut acc = init();
    for item in items {
        step(&mut acc, item);
    }
    acc
}
