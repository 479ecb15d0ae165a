//! File formats. Every CSV starts with one `#` line naming the tool
//! version, configuration hash and seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use gtconn_core::eval::TrajectoryPoint;
use gtconn_core::rng::GENERATOR_NAME;
use gtconn_core::sim::{DesignKind, GroundTruthNetwork, NetworkParams, StimulationDesign};
use gtconn_core::solver::{Duals, OutputProblem, PosteriorState};
use serde::{Deserialize, Serialize};

use crate::config::TOOL_VERSION;
use crate::error::{AppError, AppResult};

/// Provenance line written at the top of each CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# gtconn {TOOL_VERSION} config={} seed={}\n", self.config_hash, self.seed)
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AppError + '_ {
    move |source| AppError::Csv { path: path.to_path_buf(), source }
}

/// Serialise `rows` as CSV below the provenance line.
pub fn write_csv<T: Serialize>(path: &Path, prov: &Provenance, rows: &[T]) -> AppResult<()> {
    let mut buf = prov.line().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| AppError::io(path, e))?;
    }
    write_bytes(path, &buf)
}

/// CSV with a header but no rows still needs the header; `write_csv` only
/// emits it with the first row.
pub fn write_csv_with_header<T: Serialize>(path: &Path, prov: &Provenance, header: &[&str], rows: &[T]) -> AppResult<()> {
    if !rows.is_empty() {
        return write_csv(path, prov, rows);
    }
    let mut buf = prov.line();
    buf.push_str(&header.join(","));
    buf.push('\n');
    write_bytes(path, buf.as_bytes())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| AppError::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| AppError::Json { path: path.to_path_buf(), source })
}

/// Append to a file, creating it if needed; used for progress logs.
pub fn append_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).and_then(|_| f.flush()).map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub out: u32,
    #[serde(rename = "in")]
    pub inp: u32,
}

pub fn write_network_csv(path: &Path, prov: &Provenance, net: &GroundTruthNetwork) -> AppResult<()> {
    let rows: Vec<EdgeRow> = net
        .edges()
        .map(|(out, inp)| EdgeRow { out: out as u32, inp: inp as u32 })
        .collect();
    write_csv_with_header(path, prov, &["out", "in"], &rows)
}

pub fn read_network_csv(path: &Path, params: NetworkParams) -> AppResult<GroundTruthNetwork> {
    let rows: Vec<EdgeRow> = read_csv(path)?;
    let edges: Vec<(usize, usize)> = rows.iter().map(|r| (r.out as usize, r.inp as usize)).collect();
    Ok(GroundTruthNetwork::from_edges(params, &edges)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRow {
    pub test_index: u32,
    pub neuron_index: u32,
}

pub fn write_design_csv(path: &Path, prov: &Provenance, design: &StimulationDesign) -> AppResult<()> {
    let rows: Vec<DesignRow> = design
        .tests
        .iter()
        .enumerate()
        .flat_map(|(t, stim)| stim.iter().map(move |&j| DesignRow { test_index: t as u32, neuron_index: j }))
        .collect();
    write_csv_with_header(path, prov, &["test_index", "neuron_index"], &rows)
}

/// Tests must appear with consecutive indices starting at 0.
pub fn read_design_csv(path: &Path, n: usize, kind: DesignKind) -> AppResult<StimulationDesign> {
    let rows: Vec<DesignRow> = read_csv(path)?;
    let mut tests: Vec<Vec<u32>> = Vec::new();
    for r in rows {
        let t = r.test_index as usize;
        if t == tests.len() {
            tests.push(Vec::new());
        } else if t + 1 != tests.len() {
            return Err(AppError::Config(format!("{}: test indices must be consecutive from 0", path.display())));
        }
        tests[t].push(r.neuron_index);
    }
    Ok(StimulationDesign::new(n, tests, kind)?)
}

/// Metadata stored next to a generated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBundle {
    pub version: String,
    pub generator: String,
    pub config_hash: String,
    pub n: usize,
    pub theta: f64,
    pub k: Option<f64>,
    pub allow_self: bool,
    pub seed: u64,
    pub edges: usize,
}

impl NetworkBundle {
    pub fn new(net: &GroundTruthNetwork, config_hash: &str) -> Self {
        let p = net.params();
        NetworkBundle {
            version: TOOL_VERSION.to_string(),
            generator: GENERATOR_NAME.to_string(),
            config_hash: config_hash.to_string(),
            n: p.n,
            theta: p.theta,
            k: p.k_override,
            allow_self: p.allow_self,
            seed: p.seed,
            edges: net.edge_count(),
        }
    }

    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            n: self.n,
            theta: self.theta,
            k_override: self.k,
            allow_self: self.allow_self,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub test_index: usize,
    pub design_kind: String,
    pub stim_size: usize,
    pub spec: f64,
    pub sens: f64,
    pub wall_ms: f64,
    pub stopped_reason: String,
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["test_index", "design_kind", "stim_size", "spec", "sens", "wall_ms", "stopped_reason"];

pub fn trajectory_rows(design_kind: &str, points: &[TrajectoryPoint]) -> Vec<TrajectoryRow> {
    points
        .iter()
        .map(|p| TrajectoryRow {
            test_index: p.tests,
            design_kind: design_kind.to_string(),
            stim_size: p.stim_size,
            spec: p.metrics.specificity(),
            sens: p.metrics.sensitivity(),
            wall_ms: p.wall_ms,
            stopped_reason: p.stopped.map(|s| s.as_str().to_string()).unwrap_or_default(),
        })
        .collect()
}

pub fn write_trajectory_csv(path: &Path, prov: &Provenance, design_kind: &str, points: &[TrajectoryPoint]) -> AppResult<()> {
    write_csv_with_header(path, prov, &TRAJECTORY_HEADER, &trajectory_rows(design_kind, points))
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: String,
    pub n: usize,
    pub theta: f64,
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_assumed: f64,
    pub beta_assumed: f64,
    pub sigma: Option<f64>,
    pub design: String,
    pub seed: u64,
    pub test_count: usize,
    pub specificity: f64,
    pub sensitivity: f64,
    pub wall_ms: f64,
}

pub const RESULTS_HEADER: [&str; 15] = [
    "config_id",
    "n",
    "theta",
    "s",
    "alpha",
    "beta",
    "alpha_assumed",
    "beta_assumed",
    "sigma",
    "design",
    "seed",
    "test_count",
    "specificity",
    "sensitivity",
    "wall_ms",
];

/// Resumable state of an offline fit: per-output posteriors and duals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub tests: usize,
    pub outputs: Vec<OutputCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCheckpoint {
    pub output: usize,
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    /// `(test, neuron, value)` for every stimulated pair.
    pub nu: Vec<(usize, usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// Absent for streaming sessions, which do not iterate to convergence.
    pub kkt_residual: Option<f64>,
}

impl OutputCheckpoint {
    pub fn new(output: usize, problem: &OutputProblem, state: &PosteriorState) -> Self {
        OutputCheckpoint {
            output,
            w: state.w.clone(),
            a: state.a.clone(),
            eta: state.duals.eta.clone(),
            nu: state.nu_triplets(problem).collect(),
            iterations: state.iterations,
            converged: state.converged,
            kkt_residual: Some(state.kkt_residual),
        }
    }

    /// Duals laid out for `problem`, which may extend the checkpointed
    /// tests; later tests start at zero. Fails if the stored pairs do not
    /// match the problem's leading tests.
    pub fn duals_for(&self, problem: &OutputProblem) -> AppResult<Duals> {
        let mismatch = || AppError::Config(format!("checkpoint for output {} does not match the design", self.output));
        if self.eta.len() > problem.num_tests() || self.w.len() != problem.n() {
            return Err(mismatch());
        }
        let mut duals = Duals::zeros(problem);
        duals.eta[..self.eta.len()].copy_from_slice(&self.eta);
        let mut k = 0;
        for t in 0..self.eta.len() {
            for &i in problem.members(t) {
                match self.nu.get(k) {
                    Some(&(ct, ci, v)) if (ct, ci) == (t, i as usize) => duals.nu[k] = v,
                    _ => return Err(mismatch()),
                }
                k += 1;
            }
        }
        if k != self.nu.len() {
            return Err(mismatch());
        }
        Ok(duals)
    }
}
