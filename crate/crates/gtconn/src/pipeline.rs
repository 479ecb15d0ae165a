//! End-to-end experiment pipelines: simulate, infer, score.

use gtconn_core::baseline::run_naive_protocol;
use gtconn_core::eval::{Checkpoints, StopReason, TrajectoryPoint};
use gtconn_core::exec::{Clock, Executor};
use gtconn_core::likelihood::coeffs_clipped;
use gtconn_core::online::{run_closed_loop, ClosedLoopConfig, LoopDesign, OnlineSession, StoppingRule};
use gtconn_core::sim::{
    generate_bernoulli_design, generate_network, simulate_records, GroundTruthNetwork, StimulationDesign, TestRecord,
};
use gtconn_core::solver::{fit_offline_from, output_problems, score_posteriors, Duals, PosteriorState};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{AppError, AppResult};
use crate::io::{Checkpoint, OutputCheckpoint, ResultRow};

/// Result of one pipeline run.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: Mode,
    pub network: GroundTruthNetwork,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Final per-output state, absent for the naive baseline.
    pub checkpoint: Option<Checkpoint>,
}

impl ModeRun {
    /// Name written to the `design` column.
    pub fn design_kind(&self) -> &'static str {
        self.mode.as_str()
    }
}

/// Checkpoints requested by the configuration plus the final budget.
pub fn checkpoints_with_final(c: &Checkpoints, tests: usize) -> Checkpoints {
    let mut at = c.up_to(tests);
    if at.last() != Some(&tests) {
        at.push(tests);
    }
    Checkpoints::At(at)
}

pub fn network(cfg: &ExperimentConfig) -> AppResult<GroundTruthNetwork> {
    Ok(generate_network(&cfg.network_params(cfg.seed))?)
}

/// The Bernoulli design and simulated outcomes shared by offline and online
/// runs with the same seed.
pub fn bernoulli_experiment(
    cfg: &ExperimentConfig,
    net: &GroundTruthNetwork,
) -> AppResult<(StimulationDesign, Vec<TestRecord>)> {
    let design = generate_bernoulli_design(cfg.network.n, cfg.design.s, cfg.design.tests, cfg.seed)?;
    let records = simulate_records(net, &design, &cfg.noise, cfg.seed)?;
    Ok((design, records))
}

pub fn run_mode<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    cfg: &ExperimentConfig,
    mode: Mode,
    resume: Option<&Checkpoint>,
) -> AppResult<ModeRun> {
    cfg.validate()?;
    if resume.is_some() && mode != Mode::Offline {
        return Err(AppError::Usage("--resume is only supported for offline inference".into()));
    }
    let net = network(cfg)?;
    let (trajectory, checkpoint) = match mode {
        Mode::Offline => run_offline(exec, clock, cfg, &net, resume)?,
        Mode::Online | Mode::Adaptive => run_streaming(exec, clock, cfg, &net, mode)?,
        Mode::Naive => {
            let checkpoints = checkpoints_with_final(&cfg.checkpoints, cfg.design.tests);
            let (_, traj) =
                run_naive_protocol(exec, clock, &net, &cfg.noise, cfg.design.tests, cfg.naive, &checkpoints, cfg.seed)?;
            (traj, None)
        }
    };
    Ok(ModeRun {
        mode,
        network: net,
        trajectory,
        checkpoint,
    })
}

fn run_offline<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    cfg: &ExperimentConfig,
    net: &GroundTruthNetwork,
    resume: Option<&Checkpoint>,
) -> AppResult<(Vec<TrajectoryPoint>, Option<Checkpoint>)> {
    let (design, records) = bernoulli_experiment(cfg, net)?;
    if let Some(ck) = resume {
        if ck.seed != cfg.seed || ck.outputs.len() != cfg.network.n || ck.tests > design.len() {
            return Err(AppError::Config("checkpoint was produced by a different experiment".into()));
        }
    }
    let coeffs = coeffs_clipped(&cfg.assumed())?;
    let exclude_self = !cfg.network.allow_self;
    let inference = &cfg.inference;
    let start = clock.now_ms();
    let mut trajectory = Vec::new();
    let mut last = Vec::new();
    let points = checkpoints_with_final(&cfg.checkpoints, design.len()).up_to(design.len());
    for &t in &points {
        let problems = output_problems(cfg.network.n, &records[..t], &coeffs, exclude_self)?;
        let warm: Vec<Duals> = match resume {
            Some(ck) if t >= ck.tests => problems
                .iter()
                .zip(&ck.outputs)
                .map(|(p, o)| o.duals_for(p))
                .collect::<AppResult<_>>()?,
            _ => problems.iter().map(Duals::zeros).collect(),
        };
        let states: Vec<PosteriorState> = exec
            .map(problems.len(), |out| {
                fit_offline_from(&problems[out], inference, warm[out].clone()).map_err(|e| e.at_output(out))
            })
            .into_iter()
            .collect::<gtconn_core::Result<_>>()?;
        trajectory.push(TrajectoryPoint {
            tests: t,
            stim_size: design.tests[t - 1].len(),
            metrics: score_posteriors(net, &states, inference.threshold, exclude_self),
            wall_ms: clock.now_ms() - start,
            stopped: (t == design.len()).then_some(StopReason::Budget),
        });
        if t == design.len() {
            last = problems.iter().zip(&states).enumerate().map(|(o, (p, s))| OutputCheckpoint::new(o, p, s)).collect();
        }
    }
    let checkpoint = Checkpoint {
        version: crate::config::TOOL_VERSION.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        tests: design.len(),
        outputs: last,
    };
    Ok((trajectory, Some(checkpoint)))
}

fn run_streaming<E: Executor, C: Clock>(
    exec: &E,
    clock: &C,
    cfg: &ExperimentConfig,
    net: &GroundTruthNetwork,
    mode: Mode,
) -> AppResult<(Vec<TrajectoryPoint>, Option<Checkpoint>)> {
    let design = if mode == Mode::Adaptive {
        LoopDesign::Adaptive {
            s: (cfg.design.s.round() as usize).max(1),
            aggregation: cfg.design.aggregation,
        }
    } else {
        LoopDesign::Bernoulli { s_mean: cfg.design.s }
    };
    let loop_cfg = ClosedLoopConfig {
        online: cfg.online.clone(),
        design,
        stopping: StoppingRule {
            margin: cfg.stopping_margin,
            max_tests: cfg.design.tests,
        },
        checkpoints: cfg.checkpoints.clone(),
        threshold: cfg.inference.threshold,
    };
    let run = run_closed_loop(exec, clock, net, &cfg.noise, &cfg.assumed(), &loop_cfg, cfg.seed)?;
    let outputs = run
        .sessions
        .iter()
        .enumerate()
        .map(|(o, s)| session_checkpoint(o, s, &run.records))
        .collect();
    let checkpoint = Checkpoint {
        version: crate::config::TOOL_VERSION.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        tests: run.records.len(),
        outputs,
    };
    Ok((run.trajectory, Some(checkpoint)))
}

/// Posterior plus the duals still live in the window, indexed by global
/// test number.
fn session_checkpoint(output: usize, s: &OnlineSession, records: &[TestRecord]) -> OutputCheckpoint {
    let first = records.len() - s.live_tests();
    let mut eta = Vec::with_capacity(s.live_tests());
    let mut nu = Vec::new();
    for (k, (e, nus)) in s.live_duals().enumerate() {
        eta.push(e);
        let t = first + k;
        let members = records[t].stim.iter().filter(|&&j| Some(j as usize) != s.excluded());
        nu.extend(members.zip(nus).map(|(&j, &v)| (t, j as usize, v)));
    }
    OutputCheckpoint {
        output,
        w: s.posterior(),
        a: s.live_activations(),
        eta,
        nu,
        iterations: s.tests_seen(),
        converged: false,
        kkt_residual: None,
    }
}

/// Rows of the results table for one run.
pub fn result_rows(cfg: &ExperimentConfig, config_id: &str, run: &ModeRun) -> Vec<ResultRow> {
    let assumed = cfg.assumed();
    run.trajectory
        .iter()
        .map(|p| ResultRow {
            config_id: config_id.to_string(),
            n: cfg.network.n,
            theta: cfg.network.theta,
            s: cfg.design.s,
            alpha: cfg.noise.alpha,
            beta: cfg.noise.beta,
            alpha_assumed: assumed.alpha,
            beta_assumed: assumed.beta,
            sigma: cfg.sigma(run.mode),
            design: run.design_kind().to_string(),
            seed: cfg.seed,
            test_count: p.tests,
            specificity: p.metrics.specificity(),
            sensitivity: p.metrics.sensitivity(),
            wall_ms: p.wall_ms,
        })
        .collect()
}
