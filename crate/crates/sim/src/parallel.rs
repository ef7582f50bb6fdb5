//! Thread-pool executor.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use rfc_core::exec::Executor;

use crate::error::{Result, SimError};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "RFC_SIM_THREADS";

/// Runs tasks on a dedicated rayon pool. Results come back in task order, so
/// the thread count never changes a run.
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(SimError::Config(format!("{THREADS_ENV} must be >= 1")));
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::Config(format!("cannot start thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Sized by `RFC_SIM_THREADS`, or by the available parallelism when unset.
    pub fn from_env() -> Result<Self> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                SimError::Config(format!("{THREADS_ENV} must be an integer >= 1, got {v:?}"))
            }),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..count).into_par_iter().map(f).collect())
    }
}
