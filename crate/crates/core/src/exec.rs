//! Data-parallel execution with a sequential fallback.
//!
//! Every parallel map collects in input order and every reduction sums
//! fixed-size chunk partials sequentially, so `Sequential` and `Parallel`
//! produce bit-identical results regardless of thread count. Without the
//! `parallel` feature both variants run sequentially.

use serde::{Deserialize, Serialize};

/// Chunk length used by reductions; fixed so summation order never depends
/// on the scheduler.
pub const REDUCTION_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work actually fans out to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(index, chunk)` for consecutive `chunk`-length pieces of `data`.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Deterministic sum of `f(i)` over `0..n`.
    pub fn sum_range<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = n.div_ceil(REDUCTION_CHUNK);
        let partials = self.map_range(chunks, |c| {
            let end = ((c + 1) * REDUCTION_CHUNK).min(n);
            (c * REDUCTION_CHUNK..end).map(&f).sum::<f64>()
        });
        partials.into_iter().sum()
    }

    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.sum_range(a.len(), |i| a[i] * b[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let a: Vec<f64> = (0..10_000).map(|i| ((i * 37) % 101) as f64 * 1e-3 + 0.1).collect();
        let b: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let s = Execution::Sequential.dot(&a, &b);
        let p = Execution::Parallel.dot(&a, &b);
        assert_eq!(s.to_bits(), p.to_bits());
        let m1 = Execution::Sequential.map(&a, |x| x.sqrt());
        let m2 = Execution::Parallel.map(&a, |x| x.sqrt());
        assert_eq!(m1, m2);
    }

    #[test]
    fn chunked_mutation_covers_everything() {
        let mut v = vec![0usize; 2500];
        Execution::Parallel.for_each_chunk_mut(&mut v, 100, |ci, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = ci * 100 + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
