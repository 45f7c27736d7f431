//! Execution strategy for the data-parallel loops (repeats, triplet
//! enumeration, batched kNN prediction).
//!
//! With the `parallel` feature the default strategy runs on the rayon pool;
//! without it everything runs sequentially. Both strategies return results in
//! index order, so outputs are bit-identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// `f(0), f(1), ..., f(n - 1)` collected in order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }

    /// Like [`map_range`](Self::map_range) but concatenates the per-index vectors.
    pub fn flat_map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> Vec<R> + Sync + Send,
    {
        self.map_range(n, f).into_iter().flatten().collect()
    }
}

/// Configures the global rayon pool. A no-op without the `parallel` feature.
pub fn init_threads(threads: usize) -> Result<(), String> {
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
