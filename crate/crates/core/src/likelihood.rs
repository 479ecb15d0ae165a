//! Outcome likelihood: per-test coefficients, the full log-likelihood,
//! robustness of the decoder to misspecified error rates, and Beta
//! posterior means for the error rates.

use crate::error::{Error, Result};
use crate::math::ln;
use crate::sim::{NoiseSpec, StimulationDesign};

/// Weight `c_t` of the activation variable in the log-likelihood, one value
/// per outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LikelihoodCoeffs {
    pub c_plus: f64,
    pub c_minus: f64,
    /// Error rates the coefficients were computed from.
    pub assumed: NoiseSpec,
}

impl LikelihoodCoeffs {
    #[inline]
    pub fn for_outcome(&self, y: bool) -> f64 {
        if y {
            self.c_plus
        } else {
            self.c_minus
        }
    }
}

/// `c_+ = ln((1-b)/a)` and `c_- = -ln((1-a)/b)`. Zero rates give infinite
/// coefficients and are rejected; use [`coeffs_clipped`] for those.
pub fn coeffs(noise: &NoiseSpec) -> Result<LikelihoodCoeffs> {
    noise.validate()?;
    let (a, b) = (noise.alpha, noise.beta);
    if a == 0.0 || b == 0.0 {
        return Err(Error::InfiniteCoefficient { alpha: a, beta: b });
    }
    let c_minus = -ln((1.0 - a) / b);
    let c_plus = ln((1.0 - a) * (1.0 - b) / (a * b)) + c_minus;
    Ok(LikelihoodCoeffs {
        c_plus,
        c_minus,
        assumed: *noise,
    })
}

/// Coefficients after clipping the rates away from zero.
pub fn coeffs_clipped(noise: &NoiseSpec) -> Result<LikelihoodCoeffs> {
    noise.validate()?;
    coeffs(&noise.clipped())
}

/// Full log-likelihood of the outcomes `y` for binary connections `w`,
/// constants included. Rates are clipped before logs are taken.
pub fn log_likelihood(
    w: &[bool],
    design: &StimulationDesign,
    y: &[bool],
    noise: &NoiseSpec,
) -> Result<f64> {
    if w.len() != design.n {
        return Err(Error::DimensionMismatch {
            expected: design.n,
            found: w.len(),
        });
    }
    if y.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            found: y.len(),
        });
    }
    noise.validate()?;
    let NoiseSpec { alpha, beta } = noise.clipped();
    let t = design.len() as f64;
    let (mut sum_y, mut sum_a, mut sum_ya) = (0.0, 0.0, 0.0);
    for (stim, &yt) in design.tests.iter().zip(y) {
        let at = stim.iter().any(|&i| w[i as usize]);
        sum_y += yt as u8 as f64;
        sum_a += at as u8 as f64;
        sum_ya += (yt && at) as u8 as f64;
    }
    Ok(t * ln(1.0 - alpha) - ln((1.0 - alpha) / alpha) * sum_y - ln((1.0 - alpha) / beta) * sum_a
        + ln((1.0 - alpha) * (1.0 - beta) / (alpha * beta)) * sum_ya)
}

/// Whether maximum-likelihood decoding under the assumed rates still
/// recovers the true connection count for data generated with the true
/// rates:
/// `(1-a)/a > ln((1-b')/a') / ln((1-a')/b') > b/(1-b)`.
pub fn misspec_consistent(true_noise: &NoiseSpec, assumed: &NoiseSpec) -> bool {
    let assumed = assumed.clipped();
    let ratio = ln((1.0 - assumed.beta) / assumed.alpha) / ln((1.0 - assumed.alpha) / assumed.beta);
    let upper = if true_noise.alpha == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - true_noise.alpha) / true_noise.alpha
    };
    let lower = true_noise.beta / (1.0 - true_noise.beta);
    upper > ratio && ratio > lower
}

/// Beta prior pseudo-counts: `alpha ~ Beta(phi_plus, phi_minus)`,
/// `beta ~ Beta(varphi_plus, varphi_minus)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorRatePriors {
    pub phi_plus: f64,
    pub phi_minus: f64,
    pub varphi_plus: f64,
    pub varphi_minus: f64,
}

impl ErrorRatePriors {
    pub fn new(phi_plus: f64, phi_minus: f64, varphi_plus: f64, varphi_minus: f64) -> Result<Self> {
        let p = ErrorRatePriors {
            phi_plus,
            phi_minus,
            varphi_plus,
            varphi_minus,
        };
        if [phi_plus, phi_minus, varphi_plus, varphi_minus]
            .iter()
            .any(|&v| !(v > 0.0))
        {
            return Err(Error::param("priors", "pseudo-counts must be positive"));
        }
        Ok(p)
    }
}

/// Counts of (activation, outcome) agreement over a set of tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    /// `a = 0`, `y = 1`.
    pub false_pos: u64,
    /// `a = 0`, `y = 0`.
    pub true_neg: u64,
    /// `a = 1`, `y = 0`.
    pub false_neg: u64,
    /// `a = 1`, `y = 1`.
    pub true_pos: u64,
}

impl OutcomeCounts {
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = OutcomeCounts::default();
        for (a, y) in pairs {
            match (a, y) {
                (false, true) => c.false_pos += 1,
                (false, false) => c.true_neg += 1,
                (true, false) => c.false_neg += 1,
                (true, true) => c.true_pos += 1,
            }
        }
        c
    }
}

/// Posterior means `(alpha_bar, beta_bar)` of the error rates.
pub fn beta_posterior_rates(priors: &ErrorRatePriors, counts: &OutcomeCounts) -> (f64, f64) {
    let fp = counts.false_pos as f64;
    let tn = counts.true_neg as f64;
    let fneg = counts.false_neg as f64;
    let tp = counts.true_pos as f64;
    let alpha = (priors.phi_plus + fp) / (priors.phi_plus + priors.phi_minus + fp + tn);
    let beta = (priors.varphi_plus + fneg) / (priors.varphi_plus + priors.varphi_minus + fneg + tp);
    (alpha, beta)
}
