//! Hooks through which a host environment supplies parallelism and timing.
//!
//! Work items handed to an [`Executor`] are independent and each one is
//! internally deterministic, so any implementation that preserves item order
//! in its output produces identical results.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluate `f(0..count)` and return the results in index order.
    fn map<R, F>(&self, count: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;

    /// Apply `f` to every item and collect the results in item order; `f`
    /// receives the item's index.
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R, F>(&self, count: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..count).map(f).collect()
    }

    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Milliseconds since some fixed origin.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that never advances. Used when outputs must be byte-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}
