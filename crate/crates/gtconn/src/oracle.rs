//! Relaxed posteriors against exhaustive enumeration on small instances.

use gtconn_core::entropy::EntropyKind;
use gtconn_core::eval::{exact_marginals, spearman};
use gtconn_core::exec::Executor;
use gtconn_core::likelihood::coeffs_clipped;
use gtconn_core::rng;
use gtconn_core::sim::{draw_bernoulli_test, generate_network, simulate_outcomes, NetworkParams};
use gtconn_core::solver::{fit_offline, DualOptimizer, InferenceConfig, OutputProblem, PriorLogOdds};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::OracleConfig;
use crate::error::AppResult;

/// A random instance: tests on `n` neurons and the outcomes at output 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    pub n: usize,
    pub tests: Vec<Vec<u32>>,
    pub y: Vec<bool>,
}

/// Instance `index` of the family rooted at `seed`.
pub fn oracle_instance(cfg: &OracleConfig, seed: u64, index: usize) -> AppResult<OracleInstance> {
    let mut r = rng::stream(rng::derive_seed(seed, "oracle"), index as u64);
    let n = r.random_range(cfg.n_min..=cfg.n_max);
    let t = r.random_range(1..=cfg.t_max);
    let params = NetworkParams {
        n,
        theta: cfg.theta,
        k_override: None,
        allow_self: true,
        seed: r.random(),
    };
    let net = generate_network(&params)?;
    let p = cfg.s.min(n as f64) / n as f64;
    let tests: Vec<Vec<u32>> = (0..t).map(|_| draw_bernoulli_test(n, p, &mut r)).collect();
    let y = tests
        .iter()
        .map(|stim| Ok(simulate_outcomes(&net, stim, &cfg.noise, r.random())?[0]))
        .collect::<AppResult<_>>()?;
    Ok(OracleInstance { n, tests, y })
}

pub fn oracle_inference(cfg: &OracleConfig) -> InferenceConfig {
    InferenceConfig {
        entropy: EntropyKind::Exact,
        mu: PriorLogOdds::Uniform(0.0),
        dual_step: cfg.dual_step,
        optimizer: DualOptimizer::GradientDescent,
        max_iters: cfg.max_iters,
        convergence_tol: cfg.convergence_tol,
        threshold: 0.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub instance: usize,
    pub n: usize,
    pub tests: usize,
    pub neuron: usize,
    pub exact: f64,
    pub relaxed: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub instances: usize,
    pub converged: usize,
    /// Spearman correlation over every (instance, neuron) pair.
    pub spearman: Option<f64>,
    /// Fraction of neurons classified the same at threshold 1/2.
    pub agreement: f64,
}

/// Fit and enumerate every instance; rows are in instance order.
pub fn run_oracle<E: Executor>(exec: &E, cfg: &OracleConfig, seed: u64) -> AppResult<(Vec<OracleRow>, OracleSummary)> {
    let coeffs = coeffs_clipped(&cfg.noise)?;
    let inference = oracle_inference(cfg);
    let per_instance = exec.map(cfg.instances, |k| -> AppResult<Vec<OracleRow>> {
        let inst = oracle_instance(cfg, seed, k)?;
        let problem = OutputProblem::new(inst.n, &inst.tests, &inst.y, &coeffs, None)?;
        let fit = fit_offline(&problem, &inference)?;
        let exact = exact_marginals(inst.n, &inst.tests, &inst.y, &coeffs, &vec![0.5; inst.n])?;
        Ok((0..inst.n)
            .map(|i| OracleRow {
                instance: k,
                n: inst.n,
                tests: inst.tests.len(),
                neuron: i,
                exact: exact.marginals[i],
                relaxed: fit.w[i],
                converged: fit.converged,
            })
            .collect())
    });
    let mut rows = Vec::new();
    let mut converged = 0;
    for r in per_instance {
        let r = r?;
        converged += r.first().is_some_and(|x| x.converged) as usize;
        rows.extend(r);
    }
    let summary = summarize(&rows, cfg.instances, converged);
    Ok((rows, summary))
}

pub fn summarize(rows: &[OracleRow], instances: usize, converged: usize) -> OracleSummary {
    let exact: Vec<f64> = rows.iter().map(|r| r.exact).collect();
    let relaxed: Vec<f64> = rows.iter().map(|r| r.relaxed).collect();
    let agree = rows.iter().filter(|r| (r.exact >= 0.5) == (r.relaxed >= 0.5)).count();
    OracleSummary {
        instances,
        converged,
        spearman: spearman(&relaxed, &exact),
        agreement: if rows.is_empty() { 1.0 } else { agree as f64 / rows.len() as f64 },
    }
}

/// Relaxed and exact marginals of neuron 0 for two neurons tested together
/// once with a positive outcome.
pub fn pair_case(cfg: &OracleConfig) -> AppResult<(f64, f64)> {
    let coeffs = coeffs_clipped(&cfg.noise)?;
    let tests = [vec![0, 1]];
    let problem = OutputProblem::new(2, &tests, &[true], &coeffs, None)?;
    let fit = fit_offline(&problem, &oracle_inference(cfg))?;
    let exact = exact_marginals(2, &tests, &[true], &coeffs, &[0.5, 0.5])?;
    Ok((fit.w[0], exact.marginals[0]))
}
