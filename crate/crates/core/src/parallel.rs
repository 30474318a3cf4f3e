//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the independent work items of a sweep
//! (multistart Newton seeds, diagram samples, dispersion samples, field nodes)
//! are distributed with rayon. Without it every helper runs sequentially and
//! produces identical results in identical order.

use serde::{Deserialize, Serialize};

/// How a sweep distributes independent work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when work is actually spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fill `out[i] = f(i)` for every index, in chunks of at least `min_chunk`.
    pub fn fill<R, F>(self, out: &mut [R], min_chunk: usize, f: F)
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && out.len() >= 2 * min_chunk.max(1) {
            use rayon::prelude::*;
            let chunk = min_chunk.max(1);
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(k, block)| {
                    let base = k * chunk;
                    for (j, slot) in block.iter_mut().enumerate() {
                        *slot = f(base + j);
                    }
                });
            return;
        }
        let _ = min_chunk;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}
