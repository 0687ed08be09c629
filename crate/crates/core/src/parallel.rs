//! Data-parallel execution of independent work items.
//!
//! Backtests, grid sweeps and cross-score cells are embarrassingly parallel
//! across days/cells. With the `parallel` feature (default) the work can be
//! spread over a rayon pool; without it everything degrades to the
//! sequential path. Results are always collected in input order and every
//! work item derives its randomness from a pre-assigned seed, so the output
//! is identical for both execution modes.

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Run on the calling thread.
    Sequential,
    /// Run on the current rayon thread pool.
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Parallelism {
    /// The widest mode compiled into this build.
    pub fn max_available() -> Self {
        #[cfg(feature = "parallel")]
        {
            Parallelism::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Parallelism::Sequential
        }
    }

    /// `Sequential` for `jobs == Some(1)`, otherwise the widest available
    /// mode.
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Parallelism::Sequential,
            _ => Self::max_available(),
        }
    }
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<R, F>(mode: Parallelism, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        Parallelism::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// Map `f` over a slice, preserving element order in the output.
pub fn map_slice<'a, T, R, F>(mode: Parallelism, items: &'a [T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&'a T) -> R + Sync + Send,
{
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
    }
}
