//! Chunked path-parallel reduction.
//!
//! Paths `0..n_paths` are cut into fixed-size chunks. Each chunk is folded
//! sequentially in path order and the chunk results are merged in chunk
//! order, so the numbers only depend on `chunk_size`, never on how many
//! workers ran the chunks.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 1024;

/// Fraction of failed paths above which a run is aborted.
pub const FAILURE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Chunks are scheduled on the ambient rayon pool. Falls back to
    /// sequential execution when the `parallel` feature is disabled.
    #[default]
    Parallel,
    Sequential,
}

/// Monte Carlo sizing shared by every sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub n_paths: u64,
    pub n_steps: usize,
    pub seed: u64,
    pub chunk_size: usize,
    pub execution: Execution,
}

impl McParams {
    pub fn new(n_paths: u64, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            chunk_size: DEFAULT_CHUNK_SIZE,
            execution: Execution::Parallel,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_paths(mut self, n_paths: u64) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Config(format!("n_paths must be >= 2, got {}", self.n_paths)));
        }
        if self.n_steps < 1 {
            return Err(Error::Config("n_steps must be >= 1".into()));
        }
        if self.chunk_size < 1 {
            return Err(Error::Config("chunk_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-run tallies of failed paths and of the complex weight modulus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub paths_attempted: u64,
    pub domain_violations: u64,
    pub overflows: u64,
    pub weight_modulus_max: f64,
    pub weight_modulus_sum: f64,
    pub weight_count: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.paths_attempted += other.paths_attempted;
        self.domain_violations += other.domain_violations;
        self.overflows += other.overflows;
        self.weight_modulus_max = self.weight_modulus_max.max(other.weight_modulus_max);
        self.weight_modulus_sum += other.weight_modulus_sum;
        self.weight_count += other.weight_count;
    }

    #[inline]
    pub fn record_weight(&mut self, modulus: f64) {
        self.weight_modulus_max = self.weight_modulus_max.max(modulus);
        self.weight_modulus_sum += modulus;
        self.weight_count += 1;
    }

    pub fn weight_modulus_mean(&self) -> f64 {
        if self.weight_count == 0 {
            0.0
        } else {
            self.weight_modulus_sum / self.weight_count as f64
        }
    }

    pub fn failures(&self) -> u64 {
        self.domain_violations + self.overflows
    }

    /// Fails the run when more than 0.01 % of the attempted paths were lost.
    pub fn check_threshold(&self) -> Result<()> {
        if self.paths_attempted == 0 {
            return Ok(());
        }
        let frac = self.failures() as f64 / self.paths_attempted as f64;
        if frac > FAILURE_THRESHOLD {
            Err(Error::ThresholdExceeded(*self))
        } else {
            Ok(())
        }
    }
}

/// State folded over the paths of one chunk.
pub trait Mergeable: Send {
    fn merge(&mut self, other: Self);
}

/// Folds `body` over every path index and merges the chunk results in
/// chunk order.
pub fn reduce_paths<A, I, F>(
    n_paths: u64,
    chunk_size: usize,
    execution: Execution,
    init: I,
    body: F,
) -> A
where
    A: Mergeable,
    I: Fn() -> A + Sync,
    F: Fn(u64, &mut A) + Sync,
{
    let chunk = chunk_size.max(1) as u64;
    let n_chunks = n_paths.div_ceil(chunk);
    let run_chunk = |c: u64| {
        let mut acc = init();
        let lo = c * chunk;
        let hi = (lo + chunk).min(n_paths);
        for p in lo..hi {
            body(p, &mut acc);
        }
        acc
    };

    let parts: Vec<A> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n_chunks).into_par_iter().map(run_chunk).collect(),
        _ => (0..n_chunks).map(run_chunk).collect(),
    };

    let mut out = init();
    for part in parts {
        out.merge(part);
    }
    out
}

/// Maps every index independently and returns the results in index order.
pub fn map_indices<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(&f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ComplexAccumulator, Complex64};

    struct Acc(ComplexAccumulator);

    impl Mergeable for Acc {
        fn merge(&mut self, other: Self) {
            self.0.merge(&other.0);
        }
    }

    fn sample(p: u64) -> Complex64 {
        let x = ((p.wrapping_mul(2654435761) % 1000) as f64).sin();
        Complex64::new(x, x * x)
    }

    #[test]
    fn reduction_is_independent_of_execution_mode() {
        let run = |exec| {
            reduce_paths(
                10_007,
                64,
                exec,
                || Acc(ComplexAccumulator::new()),
                |p, acc| acc.0.push(sample(p)),
            )
            .0
        };
        let seq = run(Execution::Sequential);
        let par = run(Execution::Parallel);
        assert_eq!(seq, par);
        assert_eq!(seq.count(), 10_007);
    }

    #[test]
    fn chunking_changes_only_rounding() {
        let run = |chunk| {
            reduce_paths(
                5000,
                chunk,
                Execution::Sequential,
                || Acc(ComplexAccumulator::new()),
                |p, acc| acc.0.push(sample(p)),
            )
            .0
            .mean()
        };
        let a = run(1);
        let b = run(777);
        let c = run(5000);
        assert!((a - b).norm() <= 1e-12 * a.norm());
        assert!((a - c).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn threshold_is_one_in_ten_thousand() {
        let mut d = Diagnostics {
            paths_attempted: 100_000,
            domain_violations: 10,
            ..Default::default()
        };
        assert!(d.check_threshold().is_ok());
        d.overflows = 1;
        assert!(matches!(d.check_threshold(), Err(Error::ThresholdExceeded(_))));
    }
}
