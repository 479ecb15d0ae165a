//! Recovery metrics, ROC sweeps, rank correlation and the exhaustive
//! posterior oracle for small instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodCoeffs;
use crate::math::{exp, ln, logit};
use crate::sim::{BinaryMatrix, GroundTruthNetwork};

/// Confusion counts of a binarised network against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecoveryMetrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl RecoveryMetrics {
    #[inline]
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &RecoveryMetrics) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tn / (tn + fp)`; 1 when there are no negatives.
    pub fn specificity(&self) -> f64 {
        let neg = self.tn + self.fp;
        if neg == 0 {
            1.0
        } else {
            self.tn as f64 / neg as f64
        }
    }

    /// `tp / (tp + fn)`; 1 when there are no positives.
    pub fn sensitivity(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            1.0
        } else {
            self.tp as f64 / pos as f64
        }
    }
}

/// Score a predicted matrix against the truth. The diagonal is skipped when
/// `exclude_diagonal` is set.
pub fn score(truth: &BinaryMatrix, predicted: &BinaryMatrix, exclude_diagonal: bool) -> Result<RecoveryMetrics> {
    if truth.n() != predicted.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            found: predicted.n(),
        });
    }
    let mut m = RecoveryMetrics::default();
    for o in 0..truth.n() {
        for i in 0..truth.n() {
            if exclude_diagonal && o == i {
                continue;
            }
            m.record(truth.get(o, i), predicted.get(o, i));
        }
    }
    Ok(m)
}

/// Score one output neuron's predicted input set.
pub fn score_row(net: &GroundTruthNetwork, out: usize, predicted: &[bool], exclude_diagonal: bool) -> RecoveryMetrics {
    let mut m = RecoveryMetrics::default();
    let mut truth = net.inputs(out).iter().peekable();
    for (i, &p) in predicted.iter().enumerate() {
        let t = truth.next_if(|&&j| j as usize == i).is_some();
        if exclude_diagonal && i == out {
            continue;
        }
        m.record(t, p);
    }
    m
}

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub threshold: f64,
    /// `1 - specificity`.
    pub fpr: f64,
    /// Sensitivity.
    pub tpr: f64,
}

/// Classify `w >= threshold` for each threshold and report the operating
/// points. `w` is row-major `n x n`.
pub fn roc_sweep(
    w: &[f64],
    truth: &BinaryMatrix,
    thresholds: &[f64],
    exclude_diagonal: bool,
) -> Result<Vec<RocPoint>> {
    let n = truth.n();
    if w.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: w.len(),
        });
    }
    Ok(thresholds
        .iter()
        .map(|&thr| {
            let mut m = RecoveryMetrics::default();
            for o in 0..n {
                for i in 0..n {
                    if exclude_diagonal && o == i {
                        continue;
                    }
                    m.record(truth.get(o, i), w[o * n + i] >= thr);
                }
            }
            RocPoint {
                threshold: thr,
                fpr: 1.0 - m.specificity(),
                tpr: m.sensitivity(),
            }
        })
        .collect())
}

/// Operating points sorted into a monotone staircase from `(0, 0)` to
/// `(1, 1)`.
pub fn roc_curve(points: &[RocPoint]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    pts
}

/// Trapezoidal area under [`roc_curve`].
pub fn auc(points: &[RocPoint]) -> f64 {
    roc_curve(points)
        .windows(2)
        .map(|s| (s[1].0 - s[0].0) * 0.5 * (s[0].1 + s[1].1))
        .sum()
}

/// Ranks with ties sharing their average rank (1-based).
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k + 1;
        while end < idx.len() && x[idx[end]] == x[idx[k]] {
            end += 1;
        }
        let r = (k + end + 1) as f64 / 2.0;
        for &i in &idx[k..end] {
            ranks[i] = r;
        }
        k = end;
    }
    ranks
}

/// Spearman rank correlation; `None` if either input has no spread.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / crate::math::sqrt(sxx * syy))
}

/// Largest instance [`exact_marginals`] will enumerate.
pub const MAX_EXACT_N: usize = 15;

/// Exact posterior over all `2^n` connection patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    /// `P(w_i = 1 | y)`.
    pub marginals: Vec<f64>,
    /// Most probable pattern (lowest state index on ties).
    pub map: Vec<bool>,
    /// Log normaliser of `exp(sum_t c_t a_t + sum_i mu_i w_i)`.
    pub log_z: f64,
    /// Sum of normalised weights (1 up to rounding).
    pub total_mass: f64,
}

/// Enumerate every binary connection pattern, weight it by
/// `exp(sum_t c_t a_t(w) + sum_i mu_i w_i)` with `mu_i = logit(prior_i)`,
/// and normalise.
pub fn exact_marginals(
    n: usize,
    tests: &[Vec<u32>],
    y: &[bool],
    coeffs: &LikelihoodCoeffs,
    prior: &[f64],
) -> Result<ExactPosterior> {
    if n > MAX_EXACT_N {
        return Err(Error::TooLarge { n, max: MAX_EXACT_N });
    }
    if y.len() != tests.len() {
        return Err(Error::DimensionMismatch {
            expected: tests.len(),
            found: y.len(),
        });
    }
    if prior.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: prior.len(),
        });
    }
    for &p in prior {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain { what: "prior", value: p });
        }
    }
    let masks: Vec<u32> = tests
        .iter()
        .map(|t| {
            crate::sim::validate_stim(n, t)?;
            Ok(t.iter().fold(0u32, |m, &j| m | (1 << j)))
        })
        .collect::<Result<_>>()?;
    let mu: Vec<f64> = prior.iter().map(|&p| logit(p)).collect();
    let states = 1usize << n;
    let logits: Vec<f64> = (0..states)
        .map(|s| {
            let s = s as u32;
            let lik: f64 = masks
                .iter()
                .zip(y)
                .filter(|(m, _)| *m & s != 0)
                .map(|(_, &yt)| coeffs.for_outcome(yt))
                .sum();
            let pri: f64 = (0..n).filter(|&i| s >> i & 1 == 1).map(|i| mu[i]).sum();
            lik + pri
        })
        .collect();
    let (mut best, mut max) = (0usize, f64::NEG_INFINITY);
    for (s, &l) in logits.iter().enumerate() {
        if l > max {
            max = l;
            best = s;
        }
    }
    let weights: Vec<f64> = logits.iter().map(|&l| exp(l - max)).collect();
    let z: f64 = weights.iter().sum();
    let mut marginals = vec![0.0; n];
    let mut total_mass = 0.0;
    for (s, &wt) in weights.iter().enumerate() {
        let p = wt / z;
        total_mass += p;
        for (i, m) in marginals.iter_mut().enumerate() {
            if s >> i & 1 == 1 {
                *m += p;
            }
        }
    }
    Ok(ExactPosterior {
        marginals,
        map: (0..n).map(|i| best >> i & 1 == 1).collect(),
        log_z: max + ln(z),
        total_mass,
    })
}

/// Which test counts a trajectory is scored at.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Checkpoints {
    /// Every `k` tests.
    Every(usize),
    /// Explicit test counts.
    At(Vec<usize>),
}

impl Checkpoints {
    pub fn contains(&self, tests: usize) -> bool {
        match self {
            Checkpoints::Every(k) => *k > 0 && tests % k == 0,
            Checkpoints::At(list) => list.contains(&tests),
        }
    }

    /// Checkpoints in `1..=max`, ascending.
    pub fn up_to(&self, max: usize) -> Vec<usize> {
        match self {
            Checkpoints::Every(k) if *k > 0 => (1..=max / k).map(|j| j * k).collect(),
            Checkpoints::Every(_) => Vec::new(),
            Checkpoints::At(list) => {
                let mut v: Vec<usize> = list.iter().cloned().filter(|&t| t >= 1 && t <= max).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

/// Why a sequential experiment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    /// Every connection decided to the required certainty.
    Certainty,
    /// Test budget exhausted.
    Budget,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Certainty => "certainty",
            StopReason::Budget => "budget",
        }
    }
}

/// Recovery scored after a given number of tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub tests: usize,
    /// Size of the most recent stimulation set.
    pub stim_size: usize,
    pub metrics: RecoveryMetrics,
    pub wall_ms: f64,
    pub stopped: Option<StopReason>,
}
