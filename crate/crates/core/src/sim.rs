//! Domain types, ground-truth network generation, stimulation designs and
//! noisy outcome simulation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Lower clip applied to error rates before any logarithm is taken.
pub const RATE_CLIP: f64 = 1e-6;

/// False-positive rate `alpha` and false-negative rate `beta` of the
/// per-test hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NoiseSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl NoiseSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let spec = NoiseSpec { alpha, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub const fn noiseless() -> Self {
        NoiseSpec {
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::param(name, "error rate must lie in [0, 0.5)"));
            }
        }
        // Implied by both rates being below one half; kept explicit because
        // everything downstream relies on it.
        if 1.0 - self.beta <= self.alpha || 1.0 - self.alpha <= self.beta {
            return Err(Error::param(
                "alpha/beta",
                "true positive rate must exceed false positive rate",
            ));
        }
        Ok(())
    }

    /// Rates clipped into `[RATE_CLIP, 0.5 - RATE_CLIP]` so that every
    /// log-odds quantity built from them is finite.
    pub fn clipped(&self) -> Self {
        let clip = |v: f64| v.clamp(RATE_CLIP, 0.5 - RATE_CLIP);
        NoiseSpec {
            alpha: clip(self.alpha),
            beta: clip(self.beta),
        }
    }
}

/// Row-major `n x n` binary matrix; entry `(out, inp)` is set when `inp`
/// drives `out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(n: usize) -> Self {
        BinaryMatrix {
            n,
            data: vec![false; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, out: usize, inp: usize) -> bool {
        self.data[out * self.n + inp]
    }

    #[inline]
    pub fn set(&mut self, out: usize, inp: usize, v: bool) {
        self.data[out * self.n + inp] = v;
    }

    pub fn row(&self, out: usize) -> &[bool] {
        &self.data[out * self.n..(out + 1) * self.n]
    }

    pub fn row_mut(&mut self, out: usize) -> &mut [bool] {
        &mut self.data[out * self.n..(out + 1) * self.n]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Parameters a ground-truth network was generated from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkParams {
    pub n: usize,
    /// Sparsity exponent: the expected in-degree is `n^theta`.
    pub theta: f64,
    /// Replaces `n^theta` as the expected in-degree when set.
    pub k_override: Option<f64>,
    pub allow_self: bool,
    pub seed: u64,
}

impl NetworkParams {
    pub fn new(n: usize, theta: f64, seed: u64) -> Self {
        NetworkParams {
            n,
            theta,
            k_override: None,
            allow_self: false,
            seed,
        }
    }

    /// Expected number of incoming connections per output neuron.
    pub fn expected_k(&self) -> f64 {
        self.k_override
            .unwrap_or_else(|| libm::pow(self.n as f64, self.theta))
    }

    /// Per-entry connection probability `K / N`.
    pub fn link_probability(&self) -> f64 {
        self.expected_k() / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || (self.n < 2 && !self.allow_self) {
            return Err(Error::param("n", "need at least two neurons, or one with self-connections"));
        }
        match self.k_override {
            Some(k) if !(k >= 0.0 && k <= self.n as f64) => {
                return Err(Error::param("k", "expected in-degree must lie in [0, n]"))
            }
            None if !(self.theta > 0.0 && self.theta < 1.0) => {
                return Err(Error::param("theta", "sparsity exponent must lie in (0, 1)"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Binary functional connectivity; one sorted input list per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthNetwork {
    n: usize,
    inputs: Vec<Vec<u32>>,
    params: NetworkParams,
}

impl GroundTruthNetwork {
    /// Build from explicit `(out, in)` edges. Duplicate edges collapse.
    pub fn from_edges(params: NetworkParams, edges: &[(usize, usize)]) -> Result<Self> {
        let n = params.n;
        let mut inputs = vec![Vec::new(); n];
        for &(out, inp) in edges {
            for idx in [out, inp] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if out == inp && !params.allow_self {
                return Err(Error::param("edges", "self-connection present but not allowed"));
            }
            inputs[out].push(inp as u32);
        }
        for row in &mut inputs {
            row.sort_unstable();
            row.dedup();
        }
        Ok(GroundTruthNetwork { n, inputs, params })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    /// True inputs of `out`, ascending.
    pub fn inputs(&self, out: usize) -> &[u32] {
        &self.inputs[out]
    }

    pub fn has_edge(&self, out: usize, inp: usize) -> bool {
        self.inputs[out].binary_search(&(inp as u32)).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.inputs.iter().map(Vec::len).sum()
    }

    /// All edges as `(out, in)` pairs in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inputs
            .iter()
            .enumerate()
            .flat_map(|(o, row)| row.iter().map(move |&i| (o, i as usize)))
    }

    pub fn to_matrix(&self) -> BinaryMatrix {
        let mut m = BinaryMatrix::zeros(self.n);
        for (o, i) in self.edges() {
            m.set(o, i, true);
        }
        m
    }

    /// Noiseless activation of `out` for a stimulation membership mask.
    #[inline]
    pub fn activation(&self, out: usize, stimulated: &[bool]) -> bool {
        self.inputs[out].iter().any(|&j| stimulated[j as usize])
    }
}

/// Draw a network with every admissible entry set independently with
/// probability `K / N`. Deterministic in `params.seed`; each output row uses
/// its own generator stream.
pub fn generate_network(params: &NetworkParams) -> Result<GroundTruthNetwork> {
    params.validate()?;
    let n = params.n;
    let p = params.link_probability();
    let seed = rng::derive_seed(params.seed, "network");
    let candidates = if params.allow_self { n } else { n - 1 };
    let mut inputs = Vec::with_capacity(n);
    for out in 0..n {
        let mut r = rng::stream(seed, out as u64);
        let mut row = Vec::new();
        // Geometric gaps between successes of a Bernoulli(p) sequence.
        if p >= 1.0 {
            row.extend(0..candidates as u32);
        } else if p > 0.0 {
            let log_q = math::ln_1p(-p);
            let mut pos: usize = 0;
            loop {
                let u: f64 = r.random();
                let gap = libm::floor(math::ln_1p(-u) / log_q);
                if !(gap < (candidates - pos) as f64) {
                    break;
                }
                pos += gap as usize;
                row.push(pos as u32);
                pos += 1;
                if pos >= candidates {
                    break;
                }
            }
        }
        if !params.allow_self {
            for j in row.iter_mut() {
                if *j as usize >= out {
                    *j += 1;
                }
            }
        }
        inputs.push(row);
    }
    Ok(GroundTruthNetwork {
        n,
        inputs,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DesignKind {
    Bernoulli { p_stim: f64 },
    Adaptive,
    SingleNeuron,
}

/// Ordered list of stimulation sets.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulationDesign {
    pub n: usize,
    pub tests: Vec<Vec<u32>>,
    pub kind: DesignKind,
}

impl StimulationDesign {
    pub fn new(n: usize, tests: Vec<Vec<u32>>, kind: DesignKind) -> Result<Self> {
        for t in &tests {
            validate_stim(n, t)?;
        }
        Ok(StimulationDesign { n, tests, kind })
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// The first `t` tests as a design of their own.
    pub fn prefix(&self, t: usize) -> StimulationDesign {
        StimulationDesign {
            n: self.n,
            tests: self.tests[..t.min(self.tests.len())].to_vec(),
            kind: self.kind,
        }
    }
}

/// Check a stimulation set: nonempty, in range, no repeats.
pub fn validate_stim(n: usize, stim: &[u32]) -> Result<()> {
    if stim.is_empty() {
        return Err(Error::EmptyStimulation);
    }
    if let Some(&j) = stim.iter().find(|&&j| j as usize >= n) {
        return Err(Error::IndexOutOfRange { index: j as usize, n });
    }
    if stim.windows(2).all(|w| w[0] < w[1]) {
        return Ok(());
    }
    let mut sorted = stim.to_vec();
    sorted.sort_unstable();
    match sorted.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::DuplicateIndex { index: w[0] as usize }),
        None => Ok(()),
    }
}

/// One Bernoulli(`p_stim`) stimulation set drawn from `rng`; empty draws are
/// discarded and redrawn.
pub fn draw_bernoulli_test(n: usize, p_stim: f64, r: &mut rng::Rng) -> Vec<u32> {
    loop {
        let stim: Vec<u32> = (0..n as u32).filter(|_| r.random::<f64>() < p_stim).collect();
        if !stim.is_empty() {
            return stim;
        }
    }
}

/// `t` tests, each neuron included independently with probability
/// `s_mean / n`. Test `k` is drawn from generator stream `k`.
pub fn generate_bernoulli_design(
    n: usize,
    s_mean: f64,
    t: usize,
    seed: u64,
) -> Result<StimulationDesign> {
    if n == 0 {
        return Err(Error::param("n", "need at least one neuron"));
    }
    if !(s_mean >= 1.0 && s_mean <= n as f64) {
        return Err(Error::param("s_mean", "expected group size must lie in [1, n]"));
    }
    if t == 0 {
        return Err(Error::param("t", "need at least one test"));
    }
    let p_stim = s_mean / n as f64;
    let seed = rng::derive_seed(seed, "design");
    let tests = (0..t)
        .map(|k| draw_bernoulli_test(n, p_stim, &mut rng::stream(seed, k as u64)))
        .collect();
    Ok(StimulationDesign {
        n,
        tests,
        kind: DesignKind::Bernoulli { p_stim },
    })
}

/// One stimulation trial and the outcome bit observed at every neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub stim: Vec<u32>,
    pub outcomes: Vec<bool>,
}

/// Outcomes at every output neuron for a single stimulation. Output `i` uses
/// generator stream `i` of `seed`, so the result is independent of how the
/// outputs are evaluated.
pub fn simulate_outcomes(
    net: &GroundTruthNetwork,
    stim: &[u32],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<bool>> {
    validate_stim(net.n(), stim)?;
    let mut mask = vec![false; net.n()];
    for &j in stim {
        mask[j as usize] = true;
    }
    let base = rng::stream(seed, 0);
    Ok((0..net.n())
        .map(|out| {
            let mut r = base.clone();
            r.set_stream(out as u64);
            let u: f64 = r.random();
            if net.activation(out, &mask) {
                u < 1.0 - noise.beta
            } else {
                u < noise.alpha
            }
        })
        .collect())
}

/// Simulate every test of a design. Test `t` uses the seed derived from
/// `(seed, t)`.
pub fn simulate_records(
    net: &GroundTruthNetwork,
    design: &StimulationDesign,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<TestRecord>> {
    if design.n != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: design.n,
        });
    }
    let seed = rng::derive_seed(seed, "outcomes");
    design
        .tests
        .iter()
        .enumerate()
        .map(|(t, stim)| {
            Ok(TestRecord {
                stim: stim.clone(),
                outcomes: simulate_outcomes(net, stim, noise, rng::derive_indexed(seed, t as u64))?,
            })
        })
        .collect()
}
