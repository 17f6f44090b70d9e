//! Multi-threaded chunk scheduling.

use kolmosphere_core::montecarlo::Executor;
use rayon::prelude::*;

/// Runs Monte Carlo chunks on a dedicated rayon pool.
///
/// Chunk results are collected in chunk order, so outputs do not depend on
/// the number of workers.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `workers = 0` picks rayon's default thread count.
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn run<T, F>(&self, n_chunks: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n_chunks).into_par_iter().map(job).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kolmosphere_core::montecarlo::{sample_paths, Sequential};
    use rand::Rng;

    #[test]
    fn matches_sequential_for_any_worker_count() {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| Ok(rng.random::<u64>());
        let reference = sample_paths(&Sequential, 5500, 17, draw).unwrap();
        for w in [1, 2, 3] {
            let par = Parallel::new(w).unwrap();
            assert_eq!(sample_paths(&par, 5500, 17, draw).unwrap(), reference);
        }
    }
}
