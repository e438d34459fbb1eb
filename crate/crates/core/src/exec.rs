//! Hooks the std companion crate plugs into: a worker pool for per-cluster
//! work and a clock for step timings.

use alloc::vec::Vec;
use core::time::Duration;

/// Maps a function over `0..len`, returning results in index order.
///
/// Implementations may run calls concurrently, but results must not depend on
/// scheduling.
pub trait Executor: Sync {
    fn map<R, F>(&self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;

    fn threads(&self) -> usize {
        1
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R, F>(&self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

pub trait Clock {
    type Mark: Copy;

    fn mark(&self) -> Self::Mark;

    fn since(&self, mark: Self::Mark) -> Duration;
}

/// Clock that always reports zero elapsed time.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    type Mark = ();

    fn mark(&self) {}

    fn since(&self, _: ()) -> Duration {
        Duration::ZERO
    }
}
