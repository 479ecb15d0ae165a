//! Streaming inference: one session per output neuron, updated with a few
//! gradient steps per arriving test.
//!
//! Only the duals of the most recent `window` tests are optimised. Older
//! tests are frozen: their contribution `eta_t - nu_ti` to each neuron's
//! field is folded into a per-neuron constant, so an ingest touches
//! `O(S * window)` values regardless of how many tests came before.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::EntropyKind;
use crate::error::{Error, Result};
use crate::eval::{score_row, Checkpoints, RecoveryMetrics, StopReason, TrajectoryPoint};
use crate::exec::{Clock, Executor};
use crate::likelihood::{coeffs_clipped, LikelihoodCoeffs};
use crate::rng;
use crate::sim::{draw_bernoulli_test, simulate_outcomes, validate_stim, GroundTruthNetwork, NoiseSpec, TestRecord};
use crate::solver::{activation_from_field, binarize, connection_from_field, PriorLogOdds};
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct OnlineConfig {
    pub entropy: EntropyKind,
    pub mu: PriorLogOdds,
    /// Plain projected gradient step on the live duals.
    pub step: f64,
    pub steps_per_test: usize,
    /// Number of trailing tests whose duals stay live; `None` keeps all.
    pub window: Option<usize>,
    /// Keep frozen duals in memory for inspection.
    pub retain_frozen: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            entropy: EntropyKind::Quadratic { sigma: 0.1 },
            mu: PriorLogOdds::Uniform(0.0),
            step: 5e-4,
            steps_per_test: 3,
            window: Some(10),
            retain_frozen: false,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        self.entropy.validate()?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("step", "must be positive"));
        }
        if self.window == Some(0) {
            return Err(Error::param("window", "must keep at least one test live"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LiveTest {
    members: Vec<u32>,
    c: f64,
    eta: f64,
    nu: Vec<f64>,
}

/// Final duals and activation of a test that left the window.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrozenTest {
    pub members: Vec<u32>,
    pub eta: f64,
    pub nu: Vec<f64>,
    pub a: f64,
}

/// Streaming posterior for one output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSession {
    n: usize,
    excluded: Option<usize>,
    coeffs: LikelihoodCoeffs,
    entropy: EntropyKind,
    step: f64,
    steps_per_test: usize,
    window: Option<usize>,
    base_field: Vec<f64>,
    live: VecDeque<LiveTest>,
    frozen_boundary: usize,
    frozen: Option<Vec<FrozenTest>>,
    // distinct neurons in the live window and, per live nu slot, its position there
    touched: Vec<u32>,
    slot: Vec<u32>,
}

impl OnlineSession {
    pub fn new(n: usize, excluded: Option<usize>, coeffs: LikelihoodCoeffs, config: &OnlineConfig) -> Result<Self> {
        config.validate()?;
        if let Some(e) = excluded {
            if e >= n {
                return Err(Error::IndexOutOfRange { index: e, n });
            }
        }
        Ok(OnlineSession {
            n,
            excluded,
            coeffs,
            entropy: config.entropy,
            step: config.step,
            steps_per_test: config.steps_per_test,
            window: config.window,
            base_field: config.mu.expand(n)?,
            live: VecDeque::new(),
            frozen_boundary: 0,
            frozen: config.retain_frozen.then(Vec::new),
            touched: Vec::new(),
            slot: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neuron removed from every stimulation set, if any.
    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn tests_seen(&self) -> usize {
        self.frozen_boundary + self.live.len()
    }

    /// Tests with index below this have immutable duals.
    pub fn frozen_boundary(&self) -> usize {
        self.frozen_boundary
    }

    /// Present only when the session retains frozen duals.
    pub fn frozen(&self) -> Option<&[FrozenTest]> {
        self.frozen.as_deref()
    }

    pub fn live_tests(&self) -> usize {
        self.live.len()
    }

    /// Number of live dual variables (`eta` plus `nu`).
    pub fn live_slots(&self) -> usize {
        self.live.iter().map(|t| 1 + t.nu.len()).sum()
    }

    /// `(eta_t, nu_t.)` for each live test, oldest first.
    pub fn live_duals(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.live.iter().map(|t| (t.eta, t.nu.as_slice()))
    }

    /// Append one test with outcome `y` and run the configured number of
    /// gradient steps on the live duals.
    pub fn ingest(&mut self, stim: &[u32], y: bool) -> Result<()> {
        validate_stim(self.n, stim)?;
        let excl = self.excluded.map(|e| e as u32);
        let members: Vec<u32> = stim.iter().cloned().filter(|&j| Some(j) != excl).collect();
        let nu = vec![0.0; members.len()];
        self.live.push_back(LiveTest {
            members,
            c: self.coeffs.for_outcome(y),
            eta: 0.0,
            nu,
        });
        if let Some(tau) = self.window {
            while self.live.len() > tau {
                self.freeze_oldest();
            }
        }
        self.rebuild_index();
        let mut w = vec![0.0; self.touched.len()];
        let mut a = vec![0.0; self.live.len()];
        for _ in 0..self.steps_per_test {
            self.live_primal(&mut w, &mut a);
            if !(w.iter().chain(&a).all(|x| x.is_finite())) {
                return Err(Error::NumericalFailure { iteration: self.tests_seen() });
            }
            self.live_step(&w, &a);
        }
        Ok(())
    }

    fn freeze_oldest(&mut self) {
        let Some(t) = self.live.pop_front() else { return };
        let mut fa = t.c - t.eta;
        for (&j, &nu) in t.members.iter().zip(&t.nu) {
            self.base_field[j as usize] += t.eta - nu;
            fa += nu;
        }
        if let Some(archive) = &mut self.frozen {
            archive.push(FrozenTest {
                a: activation_from_field(&self.entropy, fa, t.members.len()),
                members: t.members,
                eta: t.eta,
                nu: t.nu,
            });
        }
        self.frozen_boundary += 1;
    }

    fn rebuild_index(&mut self) {
        self.touched.clear();
        for t in &self.live {
            self.touched.extend_from_slice(&t.members);
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        self.slot.clear();
        for t in &self.live {
            for j in &t.members {
                let p = self.touched.binary_search(j).unwrap_or_default();
                self.slot.push(p as u32);
            }
        }
    }

    fn live_primal(&self, w: &mut [f64], a: &mut [f64]) {
        for (k, &j) in self.touched.iter().enumerate() {
            w[k] = self.base_field[j as usize];
        }
        let mut s = 0;
        for (t, test) in self.live.iter().enumerate() {
            let mut fa = test.c - test.eta;
            for &nu in &test.nu {
                w[self.slot[s] as usize] += test.eta - nu;
                fa += nu;
                s += 1;
            }
            a[t] = activation_from_field(&self.entropy, fa, test.members.len());
        }
        for x in w.iter_mut() {
            *x = connection_from_field(&self.entropy, *x);
        }
    }

    fn live_step(&mut self, w: &[f64], a: &[f64]) {
        let step = self.step;
        let mut s = 0;
        for (t, test) in self.live.iter_mut().enumerate() {
            let mut sum = 0.0;
            for nu in test.nu.iter_mut() {
                let wi = w[self.slot[s] as usize];
                sum += wi;
                *nu = (*nu - step * (a[t] - wi)).max(0.0);
                s += 1;
            }
            test.eta = (test.eta - step * (sum - a[t])).max(0.0);
        }
    }

    /// Current field of every neuron.
    fn full_field(&self) -> Vec<f64> {
        let mut f = self.base_field.clone();
        for t in &self.live {
            for (&j, &nu) in t.members.iter().zip(&t.nu) {
                f[j as usize] += t.eta - nu;
            }
        }
        f
    }

    /// Approximate posterior connection probabilities at the current duals.
    pub fn posterior(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .full_field()
            .into_iter()
            .map(|f| connection_from_field(&self.entropy, f))
            .collect();
        if let Some(e) = self.excluded {
            w[e] = 0.0;
        }
        w
    }

    /// Activation probabilities of the live tests, oldest first.
    pub fn live_activations(&self) -> Vec<f64> {
        self.live
            .iter()
            .map(|t| {
                let fa = t.c - t.eta + t.nu.iter().sum::<f64>();
                activation_from_field(&self.entropy, fa, t.members.len())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct StoppingRule {
    /// Stop once every `|w_i - 1/2| >= margin`.
    pub margin: Option<f64>,
    pub max_tests: usize,
}

/// `true` when every entry is at least `margin` away from 1/2.
pub fn is_certain(w: &[f64], margin: f64) -> bool {
    w.iter().all(|&x| (x - 0.5).abs() >= margin)
}

pub fn should_stop(w: &[f64], tests: usize, rule: &StoppingRule) -> Option<StopReason> {
    if rule.margin.is_some_and(|m| is_certain(w, m)) {
        Some(StopReason::Certainty)
    } else if tests >= rule.max_tests {
        Some(StopReason::Budget)
    } else {
        None
    }
}

/// The `s` indices with the smallest `distance`, ties broken by lower index,
/// returned in ascending order.
pub fn select_most_uncertain(distance: &[f64], s: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..distance.len() as u32).collect();
    idx.sort_by(|&i, &j| distance[i as usize].total_cmp(&distance[j as usize]).then(i.cmp(&j)));
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

/// The `s` neurons with `w` closest to 1/2.
pub fn select_adaptive(w: &[f64], s: usize) -> Vec<u32> {
    let d: Vec<f64> = w.iter().map(|&x| (x - 0.5).abs()).collect();
    select_most_uncertain(&d, s)
}

/// How per-output uncertainty is combined into one score per input neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    /// Mean of `|w - 1/2|` over outputs.
    #[default]
    Mean,
    /// Smallest `|w - 1/2|` over outputs.
    Min,
    /// `|w - 1/2|` of one output drawn uniformly per test.
    RandomOutput,
}

const AGG_CHUNK: usize = 64;

/// Distance of each input neuron from undecided, combined over outputs.
/// An output never counts itself as a candidate input when self-connections
/// are excluded. `pick` selects the output for [`Aggregation::RandomOutput`].
pub fn aggregate_uncertainty<E: Executor>(exec: &E, sessions: &[OnlineSession], rule: Aggregation, pick: usize) -> Vec<f64> {
    let n = sessions.first().map_or(0, |s| s.n());
    if rule == Aggregation::RandomOutput {
        return sessions[pick % sessions.len()]
            .posterior()
            .iter()
            .map(|&x| (x - 0.5).abs())
            .collect();
    }
    // Fixed chunks reduced in order so the result is independent of the executor.
    let chunks = sessions.len().div_ceil(AGG_CHUNK);
    let partial = exec.map(chunks, |c| {
        let mut acc = vec![if rule == Aggregation::Min { f64::INFINITY } else { 0.0 }; n];
        let mut count = vec![0u32; n];
        for s in &sessions[c * AGG_CHUNK..((c + 1) * AGG_CHUNK).min(sessions.len())] {
            for (j, &x) in s.posterior().iter().enumerate() {
                if Some(j) == s.excluded {
                    continue;
                }
                let d = (x - 0.5).abs();
                match rule {
                    Aggregation::Min => acc[j] = acc[j].min(d),
                    _ => acc[j] += d,
                }
                count[j] += 1;
            }
        }
        (acc, count)
    });
    let mut acc = vec![if rule == Aggregation::Min { f64::INFINITY } else { 0.0 }; n];
    let mut count = vec![0u32; n];
    for (pa, pc) in partial {
        for j in 0..n {
            match rule {
                Aggregation::Min => acc[j] = acc[j].min(pa[j]),
                _ => acc[j] += pa[j],
            }
            count[j] += pc[j];
        }
    }
    for j in 0..n {
        if count[j] == 0 {
            acc[j] = 0.5;
        } else if rule == Aggregation::Mean {
            acc[j] /= count[j] as f64;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum LoopDesign {
    /// Each neuron stimulated independently with probability `s_mean / n`.
    Bernoulli { s_mean: f64 },
    /// The `s` most uncertain neurons.
    Adaptive { s: usize, aggregation: Aggregation },
}

impl LoopDesign {
    pub fn name(&self) -> &'static str {
        match self {
            LoopDesign::Bernoulli { .. } => "bernoulli",
            LoopDesign::Adaptive { .. } => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    pub online: OnlineConfig,
    pub design: LoopDesign,
    pub stopping: StoppingRule,
    pub checkpoints: Checkpoints,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub sessions: Vec<OnlineSession>,
    pub records: Vec<TestRecord>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub stop: StopReason,
}

impl ClosedLoopRun {
    pub fn posteriors(&self) -> Vec<Vec<f64>> {
        self.sessions.iter().map(OnlineSession::posterior).collect()
    }
}

/// One session per output neuron, all starting from the prior.
pub fn new_sessions(n: usize, exclude_self: bool, coeffs: LikelihoodCoeffs, config: &OnlineConfig) -> Result<Vec<OnlineSession>> {
    (0..n)
        .map(|out| OnlineSession::new(n, exclude_self.then_some(out), coeffs, config))
        .collect()
}

fn score_sessions(net: &GroundTruthNetwork, posteriors: &[Vec<f64>], threshold: f64, exclude_diagonal: bool) -> RecoveryMetrics {
    let mut m = RecoveryMetrics::default();
    for (out, w) in posteriors.iter().enumerate() {
        m.merge(&score_row(net, out, &binarize(w, threshold), exclude_diagonal));
    }
    m
}

/// Alternate test design, simulated stimulation and ingestion into every
/// output session until the stopping rule fires.
///
/// Bernoulli test `k` is drawn from the same generator stream as test `k` of
/// [`crate::sim::generate_bernoulli_design`], and outcomes use the streams of
/// [`crate::sim::simulate_records`], so a Bernoulli run sees exactly the
/// records an offline experiment with the same seed would.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    net: &GroundTruthNetwork,
    noise_true: &NoiseSpec,
    noise_assumed: &NoiseSpec,
    config: &ClosedLoopConfig,
    seed: u64,
) -> Result<ClosedLoopRun> {
    noise_true.validate()?;
    noise_assumed.validate()?;
    config.online.validate()?;
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1)"));
    }
    let n = net.n();
    match config.design {
        LoopDesign::Bernoulli { s_mean } if !(s_mean >= 1.0 && s_mean <= n as f64) => {
            return Err(Error::param("s_mean", "expected group size must lie in [1, n]"));
        }
        LoopDesign::Adaptive { s, .. } if s == 0 || s > n => {
            return Err(Error::param("s", "group size must lie in [1, n]"));
        }
        _ => {}
    }
    let exclude_self = !net.params().allow_self;
    let coeffs = coeffs_clipped(noise_assumed)?;
    let mut sessions = new_sessions(n, exclude_self, coeffs, &config.online)?;
    let design_seed = rng::derive_seed(seed, "design");
    let outcome_seed = rng::derive_seed(seed, "outcomes");
    let pick_seed = rng::derive_seed(seed, "adaptive-output");
    let start = clock.now_ms();
    let mut records = Vec::new();
    let mut trajectory = Vec::new();

    let initial = sessions.iter().map(OnlineSession::posterior).collect::<Vec<_>>();
    let mut stop = if config.stopping.max_tests == 0 {
        Some(StopReason::Budget)
    } else {
        config
            .stopping
            .margin
            .filter(|&m| initial.iter().all(|w| is_certain(w, m)))
            .map(|_| StopReason::Certainty)
    };

    while stop.is_none() {
        let k = records.len();
        let stim = match config.design {
            LoopDesign::Bernoulli { s_mean } => {
                draw_bernoulli_test(n, s_mean / n as f64, &mut rng::stream(design_seed, k as u64))
            }
            LoopDesign::Adaptive { s, aggregation } => {
                let pick = rng::stream(pick_seed, k as u64).random_range(0..n);
                let d = aggregate_uncertainty(exec, &sessions, aggregation, pick);
                select_most_uncertain(&d, s)
            }
        };
        let outcomes = simulate_outcomes(net, &stim, noise_true, rng::derive_indexed(outcome_seed, k as u64))?;
        exec.map_mut(&mut sessions, |out, s| s.ingest(&stim, outcomes[out]).map_err(|e| e.at_output(out)))
            .into_iter()
            .collect::<Result<Vec<()>>>()?;
        let tests = k + 1;
        let stim_size = stim.len();
        records.push(TestRecord { stim, outcomes });

        let certain = config.stopping.margin.is_some_and(|m| {
            exec.map(sessions.len(), |out| is_certain(&sessions[out].posterior(), m))
                .into_iter()
                .all(|c| c)
        });
        stop = if certain {
            Some(StopReason::Certainty)
        } else if tests >= config.stopping.max_tests {
            Some(StopReason::Budget)
        } else {
            None
        };
        if config.checkpoints.contains(tests) || stop.is_some() {
            let post = exec.map(sessions.len(), |out| sessions[out].posterior());
            trajectory.push(TrajectoryPoint {
                tests,
                stim_size,
                metrics: score_sessions(net, &post, config.threshold, exclude_self),
                wall_ms: clock.now_ms() - start,
                stopped: stop,
            });
        }
    }
    Ok(ClosedLoopRun {
        sessions,
        records,
        trajectory,
        stop: stop.unwrap_or(StopReason::Budget),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{FrozenClock, Sequential};
    use crate::likelihood::coeffs;
    use crate::sim::{generate_network, NetworkParams};

    fn c05() -> LikelihoodCoeffs {
        coeffs(&NoiseSpec::new(0.05, 0.05).unwrap()).unwrap()
    }

    fn exact_cfg() -> OnlineConfig {
        OnlineConfig {
            entropy: EntropyKind::Exact,
            step: 0.5,
            steps_per_test: 1,
            window: None,
            ..Default::default()
        }
    }

    #[test]
    fn positive_evidence_raises_w() {
        // From zero duals a = 0.95 exceeds w = 0.5, so eta grows and lifts w.
        let mut s = OnlineSession::new(3, None, c05(), &OnlineConfig { steps_per_test: 2, ..exact_cfg() }).unwrap();
        s.ingest(&[0], true).unwrap();
        assert!(s.posterior()[0] > 0.5, "{:?}", s.posterior());
        assert_eq!(s.posterior()[1], 0.5);
    }

    #[test]
    fn negative_evidence_lowers_w() {
        let mut s = OnlineSession::new(4, None, c05(), &OnlineConfig { steps_per_test: 50, ..exact_cfg() }).unwrap();
        s.ingest(&[2], false).unwrap();
        assert!(s.posterior()[2] < 0.5);
    }

    #[test]
    fn window_bounds_live_region() {
        let cfg = OnlineConfig {
            window: Some(2),
            retain_frozen: true,
            ..Default::default()
        };
        let mut s = OnlineSession::new(5, Some(4), c05(), &cfg).unwrap();
        for (k, stim) in [[0u32, 1], [1, 2], [2, 4], [0, 3]].iter().enumerate() {
            s.ingest(stim, k % 2 == 0).unwrap();
            assert!(s.live_tests() <= 2);
        }
        assert_eq!(s.tests_seen(), 4);
        assert_eq!(s.frozen_boundary(), 2);
        assert_eq!(s.frozen().unwrap().len(), 2);
        assert_eq!(s.posterior()[4], 0.0);
        // the excluded output is dropped from its own test
        assert_eq!(s.live_slots(), 1 + 1 + 1 + 2);
    }

    #[test]
    fn select_adaptive_examples() {
        assert_eq!(select_adaptive(&[0.5, 0.9, 0.48, 0.1, 0.55], 2), vec![0, 2]);
        assert_eq!(select_adaptive(&[0.3; 6], 3), vec![0, 1, 2]);
        assert_eq!(select_adaptive(&[0.1, 0.7, 0.2], 3), vec![0, 1, 2]);
    }

    #[test]
    fn stopping_examples() {
        let rule = StoppingRule { margin: Some(0.4), max_tests: 100 };
        assert_eq!(should_stop(&[0.0, 0.05, 0.97, 1.0], 3, &rule), Some(StopReason::Certainty));
        assert_eq!(should_stop(&[0.0, 0.6], 3, &rule), None);
        assert_eq!(should_stop(&[0.0, 0.6], 100, &rule), Some(StopReason::Budget));
    }

    #[test]
    fn aggregation_rules() {
        let cfg = exact_cfg();
        let mut sessions = new_sessions(3, true, c05(), &cfg).unwrap();
        sessions[0].ingest(&[1], true).unwrap();
        let mean = aggregate_uncertainty(&Sequential, &sessions, Aggregation::Mean, 0);
        let min = aggregate_uncertainty(&Sequential, &sessions, Aggregation::Min, 0);
        let d01 = (sessions[0].posterior()[1] - 0.5).abs();
        assert!(d01 > 0.0);
        assert_eq!(min, vec![0.0, 0.0, 0.0]);
        assert!((mean[1] - d01 / 2.0).abs() < 1e-15);
        assert_eq!(mean[0], 0.0);
        let one = aggregate_uncertainty(&Sequential, &sessions, Aggregation::RandomOutput, 3);
        assert_eq!(one[1], d01);
    }

    #[test]
    fn zero_budget_stays_at_prior() {
        let net = generate_network(&NetworkParams::new(20, 0.3, 1)).unwrap();
        let cfg = ClosedLoopConfig {
            online: OnlineConfig::default(),
            design: LoopDesign::Bernoulli { s_mean: 3.0 },
            stopping: StoppingRule { margin: None, max_tests: 0 },
            checkpoints: Checkpoints::Every(1),
            threshold: 0.5,
        };
        let run = run_closed_loop(&Sequential, &FrozenClock, &net, &NoiseSpec::noiseless(), &NoiseSpec::noiseless(), &cfg, 7).unwrap();
        assert!(run.trajectory.is_empty());
        assert_eq!(run.stop, StopReason::Budget);
        assert!(run.posteriors().iter().all(|w| w.iter().enumerate().all(|(j, &x)| x == 0.5 || x == 0.0 && j < 20)));
    }
}
