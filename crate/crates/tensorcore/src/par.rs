//! Parallel execution helpers.
//!
//! All data parallelism in the workspace funnels through this module so the
//! `parallel` feature is the single switch between rayon and the sequential
//! fallback. Every helper hands each task a disjoint region and every region
//! is computed by one sequential reduction, so results are bit-identical
//! whichever path runs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which execution path to use. `auto()` picks the compiled-in default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Parallelism {
    pub fn auto() -> Self {
        #[cfg(feature = "parallel")]
        {
            Parallelism::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Parallelism::Sequential
        }
    }
}

/// Run `f(chunk_index, chunk)` over disjoint chunks of `data`.
pub fn for_each_chunk_mut<T, F>(par: Parallelism, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(chunk > 0);
    match par {
        Parallelism::Sequential => {
            for (i, c) in data.chunks_mut(chunk).enumerate() {
                f(i, c);
            }
        }
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        }
    }
}

/// Run `f(i)` for every index in `0..n`, possibly in parallel.
///
/// `f` must not write shared state; use this for tasks that own their output
/// through interior indexing of independent structures.
pub fn for_each_index<F>(par: Parallelism, n: usize, f: F)
where
    F: Fn(usize) + Sync + Send,
{
    match par {
        Parallelism::Sequential => {
            for i in 0..n {
                f(i);
            }
        }
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            (0..n).into_par_iter().for_each(f);
        }
    }
}

/// Map `0..n` to a vector of results.
pub fn map_indices<R, F>(par: Parallelism, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match par {
        Parallelism::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => (0..n).into_par_iter().map(f).collect(),
    }
}
