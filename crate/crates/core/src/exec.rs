//! Execution hooks supplied by the host environment.

use alloc::vec::Vec;

/// Maps a closure over `0..n` and returns the results in index order.
///
/// Implementations may run the jobs concurrently; callers rely on every job
/// being a pure function of its index.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Monotonic time source in seconds.
pub trait Clock: Sync {
    fn seconds(&self) -> f64;
}

/// Clock for environments without a timer; every duration reads as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}
