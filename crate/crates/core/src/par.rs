//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it (or with [`Execution::Sequential`]) the same
//! closures run in order on the calling thread. Results are always returned in
//! index order so aggregation is independent of scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work is actually distributed across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Pairwise (cascade) summation; the result does not depend on thread count.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

pub fn pairwise_mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        pairwise_sum(x) / x.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(map_indices(Execution::Sequential, 1000, f), map_indices(Execution::Parallel, 1000, f));
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&x), 499500.0);
        assert_eq!(pairwise_mean(&[]), 0.0);
    }
}
