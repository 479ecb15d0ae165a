//! Binary entropy, its gradient, and the bounds on entropy gradients used as
//! regularisers: the strong-concavity quadratic, the independent-connections
//! bound, and feasibility boxes implied by the OR constraints.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math::{self, exp, ln, logit};
use crate::rng;

/// Largest state space [`ExpFamily`] will enumerate (`2^MAX_ENUM_BITS`).
pub const MAX_ENUM_BITS: usize = 10;

/// Entropy regulariser used by the primal solve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum EntropyKind {
    /// Exact binary entropy; primal solutions are logistic.
    Exact,
    /// Quadratic lower bound with curvature `sigma`; primal solutions are
    /// truncated linear.
    Quadratic { sigma: f64 },
    /// No regulariser (plain relaxed linear program).
    None,
}

impl EntropyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntropyKind::Quadratic { sigma } if !(sigma > 0.0 && sigma <= 4.0) => {
                Err(Error::param("sigma", "must lie in (0, 4]"))
            }
            _ => Ok(()),
        }
    }
}

/// `-x ln x - (1-x) ln(1-x)` in nats, with `0 ln 0 = 0`.
pub fn h2(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { what: "x", value: x });
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * ln(p) };
    Ok(term(x) + term(1.0 - x))
}

/// Derivative of [`h2`]: `ln((1-x)/x)`.
pub fn h2_grad(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { what: "x", value: x });
    }
    if x == 0.0 {
        return Err(Error::Unbounded { limit: f64::INFINITY });
    }
    if x == 1.0 {
        return Err(Error::Unbounded {
            limit: f64::NEG_INFINITY,
        });
    }
    Ok(-logit(x))
}

/// Strong-concavity lower bound on `|d H / d w|`: `4 |w - 1/2|`.
pub fn sc_lower_bound_w(w: f64) -> f64 {
    4.0 * (w - 0.5).abs()
}

/// `ln eps` for `eps = prod(w_stim)`, accumulated in log space.
fn ln_eps(w_stim: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &w in w_stim {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Domain { what: "w", value: w });
        }
        s += ln(w);
    }
    Ok(s)
}

/// `ln((1 - eps) / eps)` from `ln eps`.
fn logit_one_minus_eps(ln_eps: f64) -> f64 {
    ln(-math::exp_m1(ln_eps)) - ln_eps
}

/// Independent-connections lower bound on `|d H / d a_t|`:
/// `|ln(a/(1-a)) - ln((1-eps)/eps)|`, `eps = prod of the stimulated w`.
pub fn indep_bound_a(a: f64, w_stim: &[f64]) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain { what: "a", value: a });
    }
    if w_stim.is_empty() {
        return Err(Error::EmptyStimulation);
    }
    let le = ln_eps(w_stim)?;
    Ok((logit(a) - logit_one_minus_eps(le)).abs())
}

/// `1 - eps` for `eps = prod(w_stim)`; the activation at which
/// [`indep_bound_a`] vanishes.
pub fn indep_activation(w_stim: &[f64]) -> Result<f64> {
    Ok(-math::exp_m1(ln_eps(w_stim)?))
}

/// Quadratic entropy surrogate with curvature `sigma`, expanded around the
/// maximum-entropy point `w = 1/2`, `a_t = 1 - 2^-|S_t|`:
///
/// `N ln 2 - sigma/2 |w - 1/2|^2 - sigma/2 |a - 1 + eps|^2`.
///
/// `sigma = 4` is the tightest member of the family.
pub fn quadratic_surrogate(sigma: f64, w: &[f64], a: &[f64], stim_sizes: &[usize]) -> f64 {
    let dw: f64 = w.iter().map(|&x| (x - 0.5) * (x - 0.5)).sum();
    let da: f64 = a
        .iter()
        .zip(stim_sizes)
        .map(|(&x, &s)| {
            let d = x - max_entropy_activation(s);
            d * d
        })
        .sum();
    w.len() as f64 * core::f64::consts::LN_2 - 0.5 * sigma * (dw + da)
}

/// Gradient of [`quadratic_surrogate`] as `(d/dw, d/da)`.
pub fn quadratic_surrogate_grad(
    sigma: f64,
    w: &[f64],
    a: &[f64],
    stim_sizes: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let gw = w.iter().map(|&x| -sigma * (x - 0.5)).collect();
    let ga = a
        .iter()
        .zip(stim_sizes)
        .map(|(&x, &s)| -sigma * (x - max_entropy_activation(s)))
        .collect();
    (gw, ga)
}

/// `1 - 2^-s`: activation probability when `s` independent fair coins are
/// OR-ed.
#[inline]
pub fn max_entropy_activation(s: usize) -> f64 {
    1.0 - math::powi(0.5, s as i32)
}

/// Feasible interval for `w_i` given every other `w_j` and the `a_t` of the
/// tests containing `i`. Unconstrained neurons get `(0, 1)`.
pub fn feasibility_box_w(i: usize, w: &[f64], a: &[f64], tests: &[Vec<u32>]) -> (f64, f64) {
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for (stim, &at) in tests.iter().zip(a) {
        if !stim.contains(&(i as u32)) {
            continue;
        }
        let others: f64 = stim
            .iter()
            .filter(|&&j| j as usize != i)
            .map(|&j| w[j as usize])
            .sum();
        lo = lo.max(at - others);
        hi = hi.min(at);
    }
    (lo, hi)
}

/// Feasible interval for `a_t`: `[max w, min(1, sum w)]` over the
/// stimulated set.
pub fn feasibility_box_a(stim: &[u32], w: &[f64]) -> (f64, f64) {
    let lo = stim.iter().map(|&j| w[j as usize]).fold(0.0, f64::max);
    let hi: f64 = stim.iter().map(|&j| w[j as usize]).sum();
    (lo, hi.min(1.0))
}

/// Whether `(w, a)` satisfies `w_i <= a_t <= sum_{j in S_t} w_j` for every
/// test and stimulated neuron, and lies in the unit box, up to `tol`.
pub fn relaxed_constraints_hold(w: &[f64], a: &[f64], tests: &[Vec<u32>], tol: f64) -> bool {
    let in_unit = |x: f64| (-tol..=1.0 + tol).contains(&x);
    if !w.iter().chain(a).all(|&x| in_unit(x)) {
        return false;
    }
    tests.iter().zip(a).all(|(stim, &at)| {
        let sum: f64 = stim.iter().map(|&j| w[j as usize]).sum();
        at <= sum + tol && stim.iter().all(|&j| w[j as usize] <= at + tol)
    })
}

/// Exponential family over `n` binary variables whose sufficient statistics
/// are the variables themselves followed by one OR-activation per test.
/// Everything is computed by enumerating all `2^n` states.
#[derive(Debug, Clone)]
pub struct ExpFamily {
    n: usize,
    tests: Vec<Vec<u32>>,
    params: Vec<f64>,
}

impl ExpFamily {
    /// `params` holds the `n` variable parameters followed by one per test.
    pub fn new(n: usize, tests: Vec<Vec<u32>>, params: Vec<f64>) -> Result<Self> {
        if n > MAX_ENUM_BITS {
            return Err(Error::TooLarge {
                n,
                max: MAX_ENUM_BITS,
            });
        }
        if params.len() != n + tests.len() {
            return Err(Error::DimensionMismatch {
                expected: n + tests.len(),
                found: params.len(),
            });
        }
        for t in &tests {
            crate::sim::validate_stim(n, t)?;
        }
        Ok(ExpFamily { n, tests, params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    fn stats(&self, state: usize, out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = ((state >> i) & 1) as f64;
        }
        for (k, stim) in self.tests.iter().enumerate() {
            out[self.n + k] = stim.iter().any(|&j| (state >> j) & 1 == 1) as u8 as f64;
        }
    }

    /// Normalised state probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let d = self.dim();
        let mut t = vec![0.0; d];
        let logits: Vec<f64> = (0..1usize << self.n)
            .map(|s| {
                self.stats(s, &mut t);
                t.iter().zip(&self.params).map(|(x, p)| x * p).sum()
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|&l| exp(l - max)).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.probabilities()
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * ln(p))
            .sum()
    }

    /// Mean and covariance of the sufficient statistics.
    pub fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.dim();
        let probs = self.probabilities();
        let mut mean = vec![0.0; d];
        let mut second = DMatrix::<f64>::zeros(d, d);
        let mut t = vec![0.0; d];
        for (s, &p) in probs.iter().enumerate() {
            self.stats(s, &mut t);
            for i in 0..d {
                mean[i] += p * t[i];
                for j in 0..d {
                    second[(i, j)] += p * t[i] * t[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                second[(i, j)] -= mean[i] * mean[j];
            }
        }
        (mean, second)
    }

    /// Smallest eigenvalue of the negative entropy Hessian in mean
    /// coordinates. That Hessian is the inverse of the statistics'
    /// covariance, so this is `1 / lambda_max(cov)`.
    pub fn neg_entropy_hessian_min_eigenvalue(&self) -> f64 {
        let (_, cov) = self.moments();
        let eig = SymmetricEigen::new(cov);
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        1.0 / max
    }
}

/// Curvature witness for the entropy of an exponential family over `n`
/// independent-statistic binary variables: the smallest eigenvalue of
/// `-Hessian(H)`, which is at least 4. Parameters are drawn uniformly from
/// `[-4, 4]` with `seed` when not given.
pub fn strong_concavity_witness(n: usize, natural_params: Option<&[f64]>, seed: u64) -> Result<f64> {
    if n > MAX_ENUM_BITS {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUM_BITS,
        });
    }
    let params = match natural_params {
        Some(p) => p.to_vec(),
        None => {
            let mut r = rng::stream(rng::derive_seed(seed, "witness"), 0);
            (0..n).map(|_| r.random_range(-4.0..4.0)).collect()
        }
    };
    Ok(ExpFamily::new(n, Vec::new(), params)?.neg_entropy_hessian_min_eigenvalue())
}
