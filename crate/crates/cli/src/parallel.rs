use latent_hazard_core::runner::Runner;
use rayon::prelude::*;

use crate::CliError;

pub const THREADS_ENV: &str = "LATENT_HAZARD_THREADS";

/// Runs independent jobs on a private rayon pool. Results keep index order,
/// and every job seeds its own substream, so output does not depend on the
/// thread count.
pub struct PoolRunner {
    pool: rayon::ThreadPool,
}

impl PoolRunner {
    pub fn new(threads: usize) -> Result<PoolRunner, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        Ok(PoolRunner { pool })
    }

    /// Thread count from `LATENT_HAZARD_THREADS`, else the available cores.
    pub fn from_env() -> Result<PoolRunner, CliError> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{THREADS_ENV} must be a positive integer, got `{v}`"
                    ))
                })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        PoolRunner::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Runner for PoolRunner {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use latent_hazard_core::imputation::mice_impute_with;
    use latent_hazard_core::imputation::MiceOptions;
    use latent_hazard_core::runner::Sequential;
    use latent_hazard_core::synthetic::{gen_pipeline_data, FixtureConfig};

    #[test]
    fn keeps_index_order() {
        let r = PoolRunner::new(4).unwrap();
        assert_eq!(
            r.map(100, |i| i * i),
            (0..100).map(|i| i * i).collect::<Vec<_>>()
        );
    }

    #[test]
    fn imputation_matches_sequential() {
        let (d, _) = gen_pipeline_data(&FixtureConfig::new(400, 3)).unwrap();
        let opts = MiceOptions::new(4, 3, 9);
        let a = mice_impute_with(&d, &opts, &Sequential).unwrap();
        let b = mice_impute_with(&d, &opts, &PoolRunner::new(3).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
