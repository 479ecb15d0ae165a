//! Thread-pool executor and wall clock for the core library's hooks.

use std::time::Instant;

use gtconn_core::exec::{Clock, Executor};
use rayon::prelude::*;

/// Runs work items on a dedicated rayon pool. Output order always follows
/// item order, so results do not depend on the number of threads.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `jobs = 0` uses one thread per available core.
    pub fn new(jobs: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        Ok(RayonExecutor { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<R, F>(&self, count: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }

    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        self.pool
            .install(|| items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect())
    }
}

/// Milliseconds since construction.
pub struct WallClock {
    origin: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock { origin: Instant::now() }
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1e3
    }
}

/// A wall clock or a frozen one, chosen at run time.
pub enum RunClock {
    Wall(WallClock),
    Frozen,
}

impl RunClock {
    pub fn new(timing: bool) -> Self {
        if timing {
            RunClock::Wall(WallClock::default())
        } else {
            RunClock::Frozen
        }
    }
}

impl Clock for RunClock {
    fn now_ms(&self) -> f64 {
        match self {
            RunClock::Wall(c) => c.now_ms(),
            RunClock::Frozen => 0.0,
        }
    }
}
