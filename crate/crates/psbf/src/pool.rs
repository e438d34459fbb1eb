use std::time::{Duration, Instant};

use psbf_core::exec::{Clock, Executor};
use rayon::prelude::*;

/// Executor backed by a dedicated rayon pool of fixed width.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
    threads: usize,
}

impl RayonExecutor {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .thread_name(|k| format!("psbf-worker-{k}"))
            .build()?;
        Ok(Self { pool, threads })
    }
}

impl Executor for RayonExecutor {
    fn map<R, F>(&self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        if self.threads == 1 || len < 2 {
            return (0..len).map(f).collect();
        }
        self.pool.install(|| (0..len).into_par_iter().map(f).collect())
    }

    fn threads(&self) -> usize {
        self.threads
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WallClock;

impl Clock for WallClock {
    type Mark = Instant;

    fn mark(&self) -> Instant {
        Instant::now()
    }

    fn since(&self, mark: Instant) -> Duration {
        mark.elapsed()
    }
}
