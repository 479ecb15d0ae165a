//! Single-neuron stimulation comparators.
//!
//! Each trial stimulates one uniformly drawn neuron and counts, for every
//! output, how often it responded.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::{score_row, Checkpoints, RecoveryMetrics, StopReason, TrajectoryPoint};
use crate::exec::{Clock, Executor};
use crate::rng;
use crate::sim::{simulate_outcomes, BinaryMatrix, GroundTruthNetwork, NoiseSpec};
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum NaiveMode {
    /// Connected iff the pair responded on more than half its trials.
    /// Pairs never tested are connected iff `init >= 1/2`.
    RunningMean { init: f64 },
    /// Connected iff the Beta(a, b) posterior mode exceeds 1/2.
    BetaMap { a: f64, b: f64 },
}

impl NaiveMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NaiveMode::RunningMean { init } if !(0.0..=1.0).contains(&init) => {
                Err(Error::param("init", "must lie in [0, 1]"))
            }
            NaiveMode::BetaMap { a, b } if !(a >= 1.0 && b >= 1.0) => {
                Err(Error::param("beta prior", "a and b must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NaiveMode::RunningMean { .. } => "running_mean",
            NaiveMode::BetaMap { .. } => "beta_map",
        }
    }
}

/// Response counts per `(target, output)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveEstimator {
    n: usize,
    mode: NaiveMode,
    // indexed [out * n + target]
    n1: Vec<u32>,
    n0: Vec<u32>,
}

impl NaiveEstimator {
    pub fn new(n: usize, mode: NaiveMode) -> Result<Self> {
        mode.validate()?;
        Ok(NaiveEstimator {
            n,
            mode,
            n1: vec![0; n * n],
            n0: vec![0; n * n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> NaiveMode {
        self.mode
    }

    /// `(n1, n0)` for the pair `target -> out`.
    pub fn counts(&self, target: usize, out: usize) -> (u32, u32) {
        let k = out * self.n + target;
        (self.n1[k], self.n0[k])
    }

    /// Record the outcome at every output after stimulating `target`.
    pub fn update(&mut self, target: usize, outcomes: &[bool]) -> Result<()> {
        if target >= self.n {
            return Err(Error::IndexOutOfRange { index: target, n: self.n });
        }
        if outcomes.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: outcomes.len(),
            });
        }
        for (out, &y) in outcomes.iter().enumerate() {
            let k = out * self.n + target;
            if y {
                self.n1[k] += 1;
            } else {
                self.n0[k] += 1;
            }
        }
        Ok(())
    }

    /// Posterior mode `(a + n1 - 1) / (a + b + n0 + n1 - 2)`, or `None` when
    /// the denominator vanishes.
    pub fn beta_map(a: f64, b: f64, n1: u32, n0: u32) -> Option<f64> {
        let den = a + b + n0 as f64 + n1 as f64 - 2.0;
        (den > 0.0).then(|| (a + n1 as f64 - 1.0) / den)
    }

    pub fn classify_pair(&self, target: usize, out: usize) -> bool {
        let (n1, n0) = self.counts(target, out);
        match self.mode {
            NaiveMode::RunningMean { init } => {
                if n1 + n0 == 0 {
                    init >= 0.5
                } else {
                    2 * n1 > n1 + n0
                }
            }
            NaiveMode::BetaMap { a, b } => Self::beta_map(a, b, n1, n0).is_some_and(|m| m > 0.5),
        }
    }

    pub fn classify_row(&self, out: usize) -> Vec<bool> {
        (0..self.n).map(|j| self.classify_pair(j, out)).collect()
    }

    pub fn classify(&self) -> BinaryMatrix {
        let mut m = BinaryMatrix::zeros(self.n);
        for out in 0..self.n {
            m.row_mut(out).copy_from_slice(&self.classify_row(out));
        }
        m
    }
}

/// Target of naive trial `k`. Self-pairs are still stimulated; they are
/// simply not scored when self-connections are excluded.
pub fn naive_target(n: usize, seed: u64, k: usize) -> usize {
    rng::stream(rng::derive_seed(seed, "naive-targets"), k as u64).random_range(0..n)
}

/// `t` single-neuron trials with i.i.d. uniform targets, scored at each
/// checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_naive_protocol<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    net: &GroundTruthNetwork,
    noise: &NoiseSpec,
    t: usize,
    mode: NaiveMode,
    checkpoints: &Checkpoints,
    seed: u64,
) -> Result<(NaiveEstimator, Vec<TrajectoryPoint>)> {
    noise.validate()?;
    let n = net.n();
    let exclude_self = !net.params().allow_self;
    let mut est = NaiveEstimator::new(n, mode)?;
    let outcome_seed = rng::derive_seed(seed, "outcomes");
    let start = clock.now_ms();
    let mut trajectory = Vec::new();
    for k in 0..t {
        let target = naive_target(n, seed, k);
        let y = simulate_outcomes(net, &[target as u32], noise, rng::derive_indexed(outcome_seed, k as u64))?;
        est.update(target, &y)?;
        let tests = k + 1;
        if checkpoints.contains(tests) || tests == t {
            let rows = exec.map(n, |out| score_row(net, out, &est.classify_row(out), exclude_self));
            let mut metrics = RecoveryMetrics::default();
            for r in &rows {
                metrics.merge(r);
            }
            trajectory.push(TrajectoryPoint {
                tests,
                stim_size: 1,
                metrics,
                wall_ms: clock.now_ms() - start,
                stopped: (tests == t).then_some(StopReason::Budget),
            });
        }
    }
    Ok((est, trajectory))
}
