//! Execution strategy for independent work items.
//!
//! Estimators hand a runner `n` independent jobs indexed `0..n`; results come
//! back in index order. Every job draws randomness from its own substream,
//! so output never depends on how a runner schedules the work.

use alloc::vec::Vec;

pub trait Runner: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Runner for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
