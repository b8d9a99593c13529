//! Data-parallel map helpers.
//!
//! Every parallel loop in the crate funnels through [`map_indexed`] so the
//! `parallel` feature can swap rayon in and out without touching call sites.
//! Output order always equals input order, and reductions over the returned
//! vector run sequentially, so results are bit-identical with and without
//! the feature (and independent of thread scheduling).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept for benchmarking against the parallel path.
pub fn map_indexed_seq<O, F>(n: usize, f: F) -> Vec<O>
where
    F: Fn(usize) -> O,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let a = map_indexed(100, |i| i * i);
        let b = map_indexed_seq(100, |i| i * i);
        assert_eq!(a, b);
    }
}
