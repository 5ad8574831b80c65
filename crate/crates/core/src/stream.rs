//! Reproducible Gaussian streams for Monte Carlo.
//!
//! Each trajectory owns a ChaCha8 stream selected by `(seed, trajectory)`.
//! ChaCha is counter based, so stream `k` never depends on how many draws any
//! other stream consumed, and results do not depend on the worker schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Name recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (stream = trajectory index) + ziggurat N(0,1)";

#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        GaussianStream { rng }
    }

    /// Next standard normal draw.
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_normal();
        }
    }
}

/// Runs `task(index)` for every index in `0..count` on the current rayon pool
/// and returns the results in index order, so reductions over the output are
/// independent of the worker count.
pub(crate) fn ordered_map<T, F>(count: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(task).collect()
}
