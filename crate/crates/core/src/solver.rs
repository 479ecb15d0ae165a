//! Offline inference for one output neuron by dual decomposition.
//!
//! The relaxed problem couples connection probabilities `w_i` and
//! activation probabilities `a_t` through `w_i <= a_t <= sum_{i in S_t} w_i`.
//! Multipliers `nu_ti` (for `w_i <= a_t`) and `eta_t` (for the upper bound)
//! decouple it: given the duals every primal variable has a closed-form
//! maximiser, and the duals take projected gradient steps on the resulting
//! dual function.

use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{max_entropy_activation, EntropyKind};
use crate::error::{Error, Result};
use crate::eval::{score_row, Checkpoints, RecoveryMetrics, TrajectoryPoint};
use crate::exec::{Clock, Executor};
use crate::likelihood::LikelihoodCoeffs;
use crate::math::{clamp01, logistic, sqrt};
use crate::sim::{GroundTruthNetwork, StimulationDesign, TestRecord};

/// Prior log-odds `mu_i = ln(pi_i / (1 - pi_i))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum PriorLogOdds {
    Uniform(f64),
    PerNeuron(Vec<f64>),
}

impl Default for PriorLogOdds {
    fn default() -> Self {
        PriorLogOdds::Uniform(0.0)
    }
}

impl PriorLogOdds {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            PriorLogOdds::Uniform(mu) => Ok(vec![*mu; n]),
            PriorLogOdds::PerNeuron(v) if v.len() == n => Ok(v.clone()),
            PriorLogOdds::PerNeuron(v) => Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum DualOptimizer {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl DualOptimizer {
    pub const fn adam() -> Self {
        DualOptimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct InferenceConfig {
    pub entropy: EntropyKind,
    pub mu: PriorLogOdds,
    pub dual_step: f64,
    pub optimizer: DualOptimizer,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// `w >= threshold` classifies as connected.
    pub threshold: f64,
}

impl Default for InferenceConfig {
    /// Recovery settings: quadratic entropy with `sigma = 0.1`, flat prior,
    /// Adam with step 0.01 for 50 iterations.
    fn default() -> Self {
        InferenceConfig {
            entropy: EntropyKind::Quadratic { sigma: 0.1 },
            mu: PriorLogOdds::Uniform(0.0),
            dual_step: 0.01,
            optimizer: DualOptimizer::adam(),
            max_iters: 50,
            convergence_tol: 1e-6,
            threshold: 0.5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.entropy.validate()?;
        if !(self.dual_step > 0.0) {
            return Err(Error::param("dual_step", "must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param("threshold", "must lie in (0, 1)"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::param("convergence_tol", "must be non-negative"));
        }
        if let DualOptimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::param("optimizer", "Adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Tests seen by one output neuron, stored row-compressed. A neuron excluded
/// as a candidate input (the output itself, when self-connections are off)
/// is dropped from every stimulation set and pinned to `w = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputProblem {
    n: usize,
    offsets: Vec<usize>,
    members: Vec<u32>,
    c: Vec<f64>,
    excluded: Option<usize>,
}

impl OutputProblem {
    pub fn empty(n: usize, excluded: Option<usize>) -> Self {
        OutputProblem {
            n,
            offsets: vec![0],
            members: Vec::new(),
            c: Vec::new(),
            excluded,
        }
    }

    pub fn new(
        n: usize,
        tests: &[Vec<u32>],
        y: &[bool],
        coeffs: &LikelihoodCoeffs,
        excluded: Option<usize>,
    ) -> Result<Self> {
        if tests.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: tests.len(),
                found: y.len(),
            });
        }
        let mut p = Self::empty(n, excluded);
        for (stim, &yt) in tests.iter().zip(y) {
            p.push_test(stim, coeffs.for_outcome(yt))?;
        }
        Ok(p)
    }

    /// Append a test with likelihood coefficient `c`.
    pub fn push_test(&mut self, stim: &[u32], c: f64) -> Result<()> {
        crate::sim::validate_stim(self.n, stim)?;
        let excl = self.excluded.map(|e| e as u32);
        self.members.extend(stim.iter().filter(|&&j| Some(j) != excl));
        self.offsets.push(self.members.len());
        self.c.push(c);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_tests(&self) -> usize {
        self.c.len()
    }

    /// Number of `(test, neuron)` incidences, i.e. of `nu` entries.
    pub fn nnz(&self) -> usize {
        self.members.len()
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    /// Candidate inputs stimulated in test `t`.
    pub fn members(&self, t: usize) -> &[u32] {
        &self.members[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn coeff(&self, t: usize) -> f64 {
        self.c[t]
    }

    fn range(&self, t: usize) -> core::ops::Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }
}

/// Dual variables; `nu` is aligned with the problem's incidence list.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Duals {
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
}

impl Duals {
    pub fn zeros(problem: &OutputProblem) -> Self {
        Duals {
            eta: vec![0.0; problem.num_tests()],
            nu: vec![0.0; problem.nnz()],
        }
    }

    /// Pad with zeros to match a problem that has grown since these duals
    /// were produced.
    pub fn extend_to(&mut self, problem: &OutputProblem) {
        self.eta.resize(problem.num_tests(), 0.0);
        self.nu.resize(problem.nnz(), 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primal {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
}

/// Natural parameters seen by each primal variable:
/// `mu_i + sum_t x_ti (eta_t - nu_ti)` for `w` and
/// `c_t - eta_t + sum_i x_ti nu_ti` for `a`.
fn fields(problem: &OutputProblem, duals: &Duals, mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut fw = mu.to_vec();
    let mut fa = Vec::with_capacity(problem.num_tests());
    for t in 0..problem.num_tests() {
        let mut f = problem.c[t] - duals.eta[t];
        for k in problem.range(t) {
            let i = problem.members[k] as usize;
            fw[i] += duals.eta[t] - duals.nu[k];
            f += duals.nu[k];
        }
        fa.push(f);
    }
    (fw, fa)
}

fn pin_excluded(problem: &OutputProblem, w: &mut [f64]) {
    if let Some(e) = problem.excluded {
        w[e] = 0.0;
    }
}

/// Maximiser for one `w_i` given its field.
pub fn connection_from_field(entropy: &EntropyKind, field: f64) -> f64 {
    match *entropy {
        EntropyKind::Exact => logistic(field),
        EntropyKind::Quadratic { sigma } => clamp01(0.5 + field / sigma),
        EntropyKind::None => linear_step(field),
    }
}

/// Maximiser for one `a_t` given its field and the number of candidate
/// inputs stimulated; a test with none of them cannot activate the output.
pub fn activation_from_field(entropy: &EntropyKind, field: f64, stim_size: usize) -> f64 {
    if stim_size == 0 {
        return 0.0;
    }
    match *entropy {
        EntropyKind::Exact => logistic(field),
        EntropyKind::Quadratic { sigma } => clamp01(max_entropy_activation(stim_size) + field / sigma),
        EntropyKind::None => linear_step(field),
    }
}

fn linear_step(f: f64) -> f64 {
    if f > 0.0 {
        1.0
    } else if f < 0.0 {
        0.0
    } else {
        0.5
    }
}

fn primal_with(entropy: &EntropyKind, problem: &OutputProblem, duals: &Duals, mu: &[f64]) -> Primal {
    let (fw, fa) = fields(problem, duals, mu);
    let mut w: Vec<f64> = fw.into_iter().map(|f| connection_from_field(entropy, f)).collect();
    pin_excluded(problem, &mut w);
    let a = fa
        .into_iter()
        .enumerate()
        .map(|(t, f)| activation_from_field(entropy, f, problem.members(t).len()))
        .collect();
    Primal { w, a }
}

/// Closed-form maximisers with exact binary entropy:
/// `a_t = f(c_t - eta_t + sum nu_ti)`, `w_i = f(mu_i + sum eta_t - sum nu_ti)`.
pub fn primal_exact(problem: &OutputProblem, duals: &Duals, mu: &[f64]) -> Primal {
    primal_with(&EntropyKind::Exact, problem, duals, mu)
}

/// Maximisers under the quadratic entropy surrogate, truncated to `[0, 1]`:
/// `a_t = [1 - 2^-|S_t| + field/sigma]`, `w_i = [1/2 + field/sigma]`.
pub fn primal_quadratic(problem: &OutputProblem, duals: &Duals, mu: &[f64], sigma: f64) -> Primal {
    primal_with(&EntropyKind::Quadratic { sigma }, problem, duals, mu)
}

/// Maximisers of the unregularised linear objective (a vertex of the unit
/// box; 1/2 where the field vanishes).
pub fn primal_linear(problem: &OutputProblem, duals: &Duals, mu: &[f64]) -> Primal {
    primal_with(&EntropyKind::None, problem, duals, mu)
}

pub fn solve_primal(entropy: &EntropyKind, problem: &OutputProblem, duals: &Duals, mu: &[f64]) -> Primal {
    primal_with(entropy, problem, duals, mu)
}

/// Per-slot optimiser state for the duals. Adam moments exist only for the
/// `(t, i)` pairs that carry a `nu`.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerSlots {
    GradientDescent,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        steps: u32,
        m_eta: Vec<f64>,
        v_eta: Vec<f64>,
        m_nu: Vec<f64>,
        v_nu: Vec<f64>,
    },
}

impl OptimizerSlots {
    pub fn new(opt: &DualOptimizer, problem: &OutputProblem) -> Self {
        match *opt {
            DualOptimizer::GradientDescent => OptimizerSlots::GradientDescent,
            DualOptimizer::Adam { beta1, beta2, eps } => OptimizerSlots::Adam {
                beta1,
                beta2,
                eps,
                steps: 0,
                m_eta: vec![0.0; problem.num_tests()],
                v_eta: vec![0.0; problem.num_tests()],
                m_nu: vec![0.0; problem.nnz()],
                v_nu: vec![0.0; problem.nnz()],
            },
        }
    }

    /// Number of stored moment values.
    pub fn len(&self) -> usize {
        match self {
            OptimizerSlots::GradientDescent => 0,
            OptimizerSlots::Adam { m_eta, m_nu, .. } => 2 * (m_eta.len() + m_nu.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradient of the dual function: `sum_{i in S_t} w_i - a_t` for each `eta_t`
/// and `a_t - w_i` for each `nu_ti`.
pub fn dual_gradient(problem: &OutputProblem, primal: &Primal) -> Duals {
    let mut eta = Vec::with_capacity(problem.num_tests());
    let mut nu = Vec::with_capacity(problem.nnz());
    for t in 0..problem.num_tests() {
        let at = primal.a[t];
        let mut sum = 0.0;
        for &i in problem.members(t) {
            let wi = primal.w[i as usize];
            sum += wi;
            nu.push(at - wi);
        }
        eta.push(sum - at);
    }
    Duals { eta, nu }
}

/// Largest violation of the optimality conditions of the dual problem:
/// primal constraint violations, plus any nonzero gradient on a dual that is
/// strictly positive (complementary slackness).
pub fn kkt_residual(problem: &OutputProblem, duals: &Duals, primal: &Primal) -> f64 {
    let g = dual_gradient(problem, primal);
    let r = |x: f64, gx: f64| if x > 0.0 { gx.abs() } else { (-gx).max(0.0) };
    let eta = duals.eta.iter().zip(&g.eta).map(|(&x, &gx)| r(x, gx));
    let nu = duals.nu.iter().zip(&g.nu).map(|(&x, &gx)| r(x, gx));
    eta.chain(nu).fold(0.0, f64::max)
}

/// Largest violation of `a_t <= sum w` and `w_i <= a_t`.
pub fn max_constraint_violation(problem: &OutputProblem, primal: &Primal) -> f64 {
    let g = dual_gradient(problem, primal);
    g.eta.iter().chain(&g.nu).map(|&x| (-x).max(0.0)).fold(0.0, f64::max)
}

/// One projected step on the duals:
/// `eta_t <- [eta_t - step (sum w - a_t)]_+`, `nu_ti <- [nu_ti + step (w_i - a_t)]_+`,
/// with the raw gradient optionally rescaled by Adam.
pub fn dual_step(problem: &OutputProblem, duals: &mut Duals, primal: &Primal, step: f64, slots: &mut OptimizerSlots) {
    let g = dual_gradient(problem, primal);
    match slots {
        OptimizerSlots::GradientDescent => {
            for (x, gx) in duals.eta.iter_mut().zip(&g.eta) {
                *x = (*x - step * gx).max(0.0);
            }
            for (x, gx) in duals.nu.iter_mut().zip(&g.nu) {
                *x = (*x - step * gx).max(0.0);
            }
        }
        OptimizerSlots::Adam {
            beta1,
            beta2,
            eps,
            steps,
            m_eta,
            v_eta,
            m_nu,
            v_nu,
        } => {
            m_eta.resize(duals.eta.len(), 0.0);
            v_eta.resize(duals.eta.len(), 0.0);
            m_nu.resize(duals.nu.len(), 0.0);
            v_nu.resize(duals.nu.len(), 0.0);
            *steps += 1;
            let bc1 = 1.0 - crate::math::powi(*beta1, *steps as i32);
            let bc2 = 1.0 - crate::math::powi(*beta2, *steps as i32);
            let (b1, b2, e) = (*beta1, *beta2, *eps);
            let update = |x: &mut f64, gx: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * gx;
                *v = b2 * *v + (1.0 - b2) * gx * gx;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *x = (*x - step * mhat / (sqrt(vhat) + e)).max(0.0);
            };
            for k in 0..duals.eta.len() {
                update(&mut duals.eta[k], g.eta[k], &mut m_eta[k], &mut v_eta[k]);
            }
            for k in 0..duals.nu.len() {
                update(&mut duals.nu[k], g.nu[k], &mut m_nu[k], &mut v_nu[k]);
            }
        }
    }
}

/// Fitted posterior for one output neuron.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorState {
    /// Approximate `P(w_i = 1 | data)`.
    pub w: Vec<f64>,
    /// Approximate `P(a_t = 1 | data)`.
    pub a: Vec<f64>,
    pub duals: Duals,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl PosteriorState {
    /// `(t, i, nu_ti)` for every stimulated pair.
    pub fn nu_triplets<'a>(&'a self, problem: &'a OutputProblem) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        (0..problem.num_tests()).flat_map(move |t| {
            problem
                .range(t)
                .map(move |k| (t, problem.members[k] as usize, self.duals.nu[k]))
        })
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Run the dual decomposition from zero duals.
pub fn fit_offline(problem: &OutputProblem, config: &InferenceConfig) -> Result<PosteriorState> {
    fit_offline_from(problem, config, Duals::zeros(problem))
}

/// Run the dual decomposition from the given duals. Iterates until the KKT
/// residual drops below `convergence_tol` or `max_iters` steps were taken;
/// the returned primal is solved at the final duals.
pub fn fit_offline_from(problem: &OutputProblem, config: &InferenceConfig, mut duals: Duals) -> Result<PosteriorState> {
    config.validate()?;
    duals.extend_to(problem);
    let mu = config.mu.expand(problem.n())?;
    let mut slots = OptimizerSlots::new(&config.optimizer, problem);
    let mut iterations = 0;
    loop {
        let primal = solve_primal(&config.entropy, problem, &duals, &mu);
        if !(all_finite(&primal.w) && all_finite(&primal.a)) {
            return Err(Error::NumericalFailure { iteration: iterations });
        }
        let residual = kkt_residual(problem, &duals, &primal);
        let converged = residual < config.convergence_tol;
        if converged || iterations >= config.max_iters {
            return Ok(PosteriorState {
                w: primal.w,
                a: primal.a,
                duals,
                iterations,
                converged,
                kkt_residual: residual,
            });
        }
        dual_step(problem, &mut duals, &primal, config.dual_step, &mut slots);
        iterations += 1;
        if !(all_finite(&duals.eta) && all_finite(&duals.nu)) {
            return Err(Error::NumericalFailure { iteration: iterations });
        }
    }
}

/// `w_i >= threshold` marks a connection; ties count as connected.
pub fn binarize(w: &[f64], threshold: f64) -> Vec<bool> {
    w.iter().map(|&x| x >= threshold).collect()
}

/// Per-output problems for every neuron of a recorded experiment.
pub fn output_problems(
    n: usize,
    records: &[TestRecord],
    coeffs: &LikelihoodCoeffs,
    exclude_self: bool,
) -> Result<Vec<OutputProblem>> {
    for r in records {
        if r.outcomes.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.outcomes.len(),
            });
        }
    }
    let tests: Vec<Vec<u32>> = records.iter().map(|r| r.stim.clone()).collect();
    (0..n)
        .map(|out| {
            let y: Vec<bool> = records.iter().map(|r| r.outcomes[out]).collect();
            OutputProblem::new(n, &tests, &y, coeffs, exclude_self.then_some(out))
        })
        .collect()
}

/// Fit every output neuron independently. Results do not depend on the
/// executor; the first failure (by output index) is reported.
pub fn fit_all_outputs<E: Executor>(
    exec: &E,
    design: &StimulationDesign,
    records: &[TestRecord],
    coeffs: &LikelihoodCoeffs,
    config: &InferenceConfig,
    exclude_self: bool,
) -> Result<Vec<PosteriorState>> {
    if records.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            found: records.len(),
        });
    }
    for (r, stim) in records.iter().zip(&design.tests) {
        if &r.stim != stim {
            return Err(Error::param("records", "stimulation sets disagree with the design"));
        }
    }
    config.validate()?;
    let problems = output_problems(design.n, records, coeffs, exclude_self)?;
    exec.map(problems.len(), |out| fit_offline(&problems[out], config).map_err(|e| e.at_output(out)))
        .into_iter()
        .collect()
}

/// Score fitted posteriors against the network after binarising.
pub fn score_posteriors(net: &GroundTruthNetwork, states: &[PosteriorState], threshold: f64, exclude_diagonal: bool) -> RecoveryMetrics {
    let mut m = RecoveryMetrics::default();
    for (out, s) in states.iter().enumerate() {
        m.merge(&score_row(net, out, &binarize(&s.w, threshold), exclude_diagonal));
    }
    m
}

/// Offline fits on growing prefixes of one recorded experiment, scored at
/// each checkpoint. `wall_ms` is the time spent on that prefix's fit.
#[allow(clippy::too_many_arguments)]
pub fn offline_trajectory<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    net: &GroundTruthNetwork,
    design: &StimulationDesign,
    records: &[TestRecord],
    coeffs: &LikelihoodCoeffs,
    config: &InferenceConfig,
    checkpoints: &Checkpoints,
) -> Result<Vec<TrajectoryPoint>> {
    if records.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            found: records.len(),
        });
    }
    let exclude_self = !net.params().allow_self;
    checkpoints
        .up_to(design.len())
        .into_iter()
        .map(|t| {
            let start = clock.now_ms();
            let states = fit_all_outputs(exec, &design.prefix(t), &records[..t], coeffs, config, exclude_self)?;
            let wall_ms = clock.now_ms() - start;
            Ok(TrajectoryPoint {
                tests: t,
                stim_size: design.tests[t - 1].len(),
                metrics: score_posteriors(net, &states, config.threshold, exclude_self),
                wall_ms,
                stopped: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::coeffs;
    use crate::math::ln;
    use crate::sim::NoiseSpec;

    fn c05() -> LikelihoodCoeffs {
        coeffs(&NoiseSpec::new(0.05, 0.05).unwrap()).unwrap()
    }

    #[test]
    fn exact_primal_at_zero_duals() {
        let p = OutputProblem::new(3, &[vec![0, 1], vec![2]], &[true, false], &c05(), None).unwrap();
        let d = Duals::zeros(&p);
        let s = primal_exact(&p, &d, &[0.0; 3]);
        assert_eq!(s.w, vec![0.5; 3]);
        assert!((s.a[0] - 0.95).abs() < 1e-9);
        assert!((s.a[1] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn quadratic_primal_clamps() {
        let stim: Vec<u32> = (0..10).collect();
        let p = OutputProblem::new(10, &[stim.clone(), stim], &[true, false], &c05(), None).unwrap();
        let d = Duals::zeros(&p);
        let s = primal_quadratic(&p, &d, &[0.0; 10], 0.1);
        assert_eq!(s.w, vec![0.5; 10]);
        // 1 - 2^-10 + ln(19)/0.1 before truncation
        assert_eq!(s.a, vec![1.0, 0.0]);
        let raw = max_entropy_activation(10) + ln(19.0) / 0.1;
        assert!((raw - 30.443413).abs() < 1e-5);
    }

    #[test]
    fn dual_step_worked_examples() {
        let c = c05();
        // eta unchanged when sum w equals a
        let p = OutputProblem::new(2, &[vec![0, 1]], &[true], &c, None).unwrap();
        let mut d = Duals::zeros(&p);
        let primal = Primal { w: vec![0.5, 0.5], a: vec![1.0] };
        dual_step(&p, &mut d, &primal, 0.01, &mut OptimizerSlots::GradientDescent);
        assert_eq!(d.eta[0], 0.0);

        // nu grows by step * (w - a)
        let p = OutputProblem::new(1, &[vec![0]], &[true], &c, None).unwrap();
        let mut d = Duals::zeros(&p);
        let primal = Primal { w: vec![0.9], a: vec![0.2] };
        dual_step(&p, &mut d, &primal, 0.1, &mut OptimizerSlots::GradientDescent);
        assert!((d.nu[0] - 0.07).abs() < 1e-9);

        // violated upper constraint raises eta
        let p = OutputProblem::new(2, &[vec![0, 1]], &[true], &c, None).unwrap();
        let mut d = Duals::zeros(&p);
        let primal = Primal { w: vec![0.2, 0.2], a: vec![0.9] };
        dual_step(&p, &mut d, &primal, 0.1, &mut OptimizerSlots::GradientDescent);
        assert!((d.eta[0] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn projection_keeps_duals_nonnegative() {
        let p = OutputProblem::new(2, &[vec![0, 1]], &[false], &c05(), None).unwrap();
        let mut d = Duals { eta: vec![0.01], nu: vec![0.0, 0.02] };
        let primal = Primal { w: vec![0.0, 0.0], a: vec![0.9] };
        let mut slots = OptimizerSlots::new(&DualOptimizer::adam(), &p);
        dual_step(&p, &mut d, &primal, 1.0, &mut slots);
        assert!(d.eta.iter().chain(&d.nu).all(|&x| x >= 0.0));
        assert_eq!(slots.len(), 6);
    }

    #[test]
    fn single_neuron_single_positive_test() {
        // With one stimulated neuron the constraints force a = w, so the
        // relaxed objective is c w + 2 H2(w); grid search gives its maximiser.
        let c = ln(19.0);
        let h2 = |x: f64| -x * ln(x) - (1.0 - x) * ln(1.0 - x);
        let oracle = (1..200_000)
            .map(|k| k as f64 / 200_000.0)
            .max_by(|x, y| (c * x + 2.0 * h2(*x)).total_cmp(&(c * y + 2.0 * h2(*y))))
            .unwrap();
        let p = OutputProblem::new(1, &[vec![0]], &[true], &c05(), None).unwrap();
        let cfg = InferenceConfig {
            entropy: EntropyKind::Exact,
            optimizer: DualOptimizer::GradientDescent,
            dual_step: 0.5,
            max_iters: 20_000,
            convergence_tol: 1e-10,
            ..Default::default()
        };
        let s = fit_offline(&p, &cfg).unwrap();
        assert!(s.converged);
        assert!((s.w[0] - oracle).abs() < 1e-5, "{} vs {}", s.w[0], oracle);
        assert!((s.w[0] - s.a[0]).abs() < 1e-8);
        // below the two-state Bayes posterior of 0.95
        assert!(s.w[0] < 0.95);
    }

    #[test]
    fn no_tests_returns_prior() {
        let p = OutputProblem::empty(3, None);
        let cfg = InferenceConfig {
            entropy: EntropyKind::Exact,
            mu: PriorLogOdds::PerNeuron(vec![0.0, 1.0, -2.0]),
            ..Default::default()
        };
        let s = fit_offline(&p, &cfg).unwrap();
        assert_eq!(s.w, vec![0.5, logistic(1.0), logistic(-2.0)]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn excluded_neuron_is_pinned_and_dropped() {
        let p = OutputProblem::new(3, &[vec![0, 1], vec![1]], &[true, true], &c05(), Some(1)).unwrap();
        assert_eq!(p.members(0), &[0]);
        assert!(p.members(1).is_empty());
        let s = fit_offline(&p, &InferenceConfig::default()).unwrap();
        assert_eq!(s.w[1], 0.0);
        assert_eq!(s.a[1], 0.0);
    }

    #[test]
    fn binarize_tie_is_connected() {
        assert_eq!(binarize(&[0.6, 0.4], 0.5), vec![true, false]);
        assert_eq!(binarize(&[0.5], 0.5), vec![true]);
        assert_eq!(binarize(&[0.0, 0.0], 0.5), vec![false, false]);
    }

    #[test]
    fn config_validation() {
        let mut c = InferenceConfig::default();
        assert!(c.validate().is_ok());
        c.threshold = 1.0;
        assert!(c.validate().is_err());
        let c = InferenceConfig { dual_step: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn non_finite_prior_is_a_numerical_failure() {
        let p = OutputProblem::new(1, &[vec![0]], &[true], &c05(), None).unwrap();
        let cfg = InferenceConfig {
            mu: PriorLogOdds::Uniform(f64::NAN),
            ..Default::default()
        };
        assert_eq!(fit_offline(&p, &cfg), Err(Error::NumericalFailure { iteration: 0 }));
    }
}
