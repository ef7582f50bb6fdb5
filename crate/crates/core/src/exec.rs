//! Task execution strategy for the round engine.
//!
//! The engine hands independent tasks (one per sampled client, one per
//! candidate evaluation) to an [`Executor`] and consumes the results in task
//! order, so any executor that preserves order yields identical runs.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Computes `f(0), f(1), ..., f(count - 1)` and returns them in index order.
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}
