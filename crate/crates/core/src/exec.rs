//! Replica execution and per-replica random streams.
//!
//! Every replica draws from its own ChaCha stream: the run seed selects the
//! key and the replica index selects the stream. Results therefore do not
//! depend on how replicas are scheduled across workers, and the parallel and
//! sequential back ends produce identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How replica loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing pool; falls back to sequential when the
    /// `parallel` feature is disabled.
    #[default]
    Parallel,
}

/// Sizes the global worker pool. Must run before any parallel work; a no-op
/// without the `parallel` feature.
pub fn init_workers(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Random stream for replica `index` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Maps `f` over `0..count`, preserving index order in the output.
pub fn map_indices<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Folds replicas into an accumulator; `merge` must be associative and
/// commutative so the reduction order is irrelevant.
#[cfg_attr(not(feature = "parallel"), allow(unused_variables))]
pub fn fold_replicas<A, F, M>(count: usize, exec: Execution, init: A, step: F, merge: M) -> A
where
    A: Clone + Send + Sync,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count)
                .into_par_iter()
                .fold(
                    || init.clone(),
                    |mut acc, i| {
                        step(&mut acc, i);
                        acc
                    },
                )
                .reduce(|| init.clone(), &merge)
        }
        _ => {
            let mut acc = init;
            for i in 0..count {
                step(&mut acc, i);
            }
            acc
        }
    }
}
