//! Declarative experiment configuration.
//!
//! A run is described by one JSON document. Missing keys take defaults,
//! unknown keys are rejected, and `key.path=value` overrides are applied to
//! the JSON before it is parsed, so overrides obey the same schema.

use std::path::{Path, PathBuf};

use gtconn_core::baseline::NaiveMode;
use gtconn_core::entropy::EntropyKind;
use gtconn_core::eval::Checkpoints;
use gtconn_core::online::{Aggregation, OnlineConfig};
use gtconn_core::sim::{NetworkParams, NoiseSpec};
use gtconn_core::solver::InferenceConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GTCONN_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "gtconn-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch fit on a Bernoulli design.
    Offline,
    /// Streaming fit on a Bernoulli design.
    Online,
    /// Streaming fit choosing the most uncertain neurons.
    Adaptive,
    /// Single-neuron stimulation baseline.
    Naive,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Offline => "offline",
            Mode::Online => "online",
            Mode::Adaptive => "adaptive",
            Mode::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub n: usize,
    /// Expected in-degree is `n^theta` unless `k` is given.
    pub theta: f64,
    pub k: Option<f64>,
    pub allow_self: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n: 200,
            theta: 0.3,
            k: None,
            allow_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Expected group size (Bernoulli) or exact group size (adaptive).
    pub s: f64,
    /// Test budget.
    pub tests: usize,
    pub aggregation: Aggregation,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            s: 10.0,
            tests: 1000,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Axes of a sweep. An absent axis takes the base configuration's value;
/// an empty list makes the grid empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub n: Option<Vec<usize>>,
    pub theta: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// Assumed error rates; `null` entries mean "same as the true rates".
    pub assumed: Option<Vec<Option<NoiseSpec>>>,
    pub sigma: Option<Vec<f64>>,
    pub modes: Option<Vec<Mode>>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub instances: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub t_max: usize,
    pub theta: f64,
    /// Expected group size, capped at the instance size.
    pub s: f64,
    pub noise: NoiseSpec,
    pub dual_step: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            instances: 50,
            n_min: 2,
            n_max: 10,
            t_max: 20,
            theta: 0.3,
            s: 3.0,
            noise: NoiseSpec { alpha: 0.05, beta: 0.05 },
            dual_step: 0.1,
            max_iters: 200_000,
            convergence_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root seed; every random stream is derived from it.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub network: NetworkConfig,
    pub design: DesignConfig,
    pub noise: NoiseSpec,
    /// Error rates used for inference; defaults to `noise`.
    pub assumed_noise: Option<NoiseSpec>,
    pub inference: InferenceConfig,
    pub online: OnlineConfig,
    /// Stop streaming runs once every `|w - 1/2|` reaches this margin.
    pub stopping_margin: Option<f64>,
    pub naive: NaiveMode,
    pub checkpoints: Checkpoints,
    /// Record wall-clock times; when off every `wall_ms` is 0 so that
    /// reruns are byte-identical.
    pub timing: bool,
    pub write_checkpoint: bool,
    pub sweep: SweepGrid,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: None,
            network: NetworkConfig::default(),
            design: DesignConfig::default(),
            noise: NoiseSpec { alpha: 0.05, beta: 0.05 },
            assumed_noise: None,
            inference: InferenceConfig::default(),
            online: OnlineConfig::default(),
            stopping_margin: None,
            naive: NaiveMode::RunningMean { init: 0.0 },
            checkpoints: Checkpoints::Every(100),
            timing: false,
            write_checkpoint: true,
            sweep: SweepGrid::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Layer the file at `path` and then `overrides` over the defaults,
    /// parse and validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> AppResult<Self> {
        let mut value = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialise");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
            if !file.is_object() {
                return Err(AppError::Config(format!("{}: expected a JSON object", p.display())));
            }
            merge(&mut value, file);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| AppError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::Config(m));
        self.network_params(0).validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| AppError::Config(format!("noise: {e}")))?;
        self.assumed().validate().map_err(|e| AppError::Config(format!("assumed_noise: {e}")))?;
        self.inference.validate().map_err(|e| AppError::Config(format!("inference: {e}")))?;
        self.online.validate().map_err(|e| AppError::Config(format!("online: {e}")))?;
        self.naive.validate().map_err(|e| AppError::Config(format!("naive: {e}")))?;
        if !(self.design.s >= 1.0 && self.design.s <= self.network.n as f64) {
            return bad(format!("design.s = {} must lie in [1, network.n]", self.design.s));
        }
        if let Some(m) = self.stopping_margin {
            if !(0.0..=0.5).contains(&m) {
                return bad(format!("stopping_margin = {m} must lie in [0, 0.5]"));
            }
        }
        let o = &self.oracle;
        if !(o.n_min >= 1 && o.n_min <= o.n_max && o.n_max <= gtconn_core::eval::MAX_EXACT_N && o.t_max >= 1) {
            return bad("oracle sizes must satisfy 1 <= n_min <= n_max <= 15 and t_max >= 1".into());
        }
        Ok(())
    }

    pub fn assumed(&self) -> NoiseSpec {
        self.assumed_noise.unwrap_or(self.noise)
    }

    pub fn network_params(&self, seed: u64) -> NetworkParams {
        NetworkParams {
            n: self.network.n,
            theta: self.network.theta,
            k_override: self.network.k,
            allow_self: self.network.allow_self,
            seed,
        }
    }

    /// Quadratic curvature used by `mode`, if any.
    pub fn sigma(&self, mode: Mode) -> Option<f64> {
        let kind = match mode {
            Mode::Offline => self.inference.entropy,
            Mode::Online | Mode::Adaptive => self.online.entropy,
            Mode::Naive => return None,
        };
        match kind {
            EntropyKind::Quadratic { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Short content hash, independent of where outputs are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hash_json(&c)
    }

    /// Output directory: explicit argument, then config, then environment.
    pub fn resolve_out_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
    }
}

/// First 16 hex digits of the SHA-256 of a value's JSON encoding.
pub fn hash_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("configuration serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Recursively overlay `top` on `base`. Tagged enums (objects with a
/// `kind` key) and non-objects replace the base value wholesale.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) if !t.contains_key("kind") => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON when possible and taken
/// as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> AppResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| AppError::Usage(format!("override `{spec}` is not of the form key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(AppError::Usage(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}
