//! Cartesian experiment grids with resumable, hash-keyed output.
//!
//! Each finished cell appends its rows to `results.partial.csv` and then its
//! key to `done.txt`. On restart, cells listed in `done.txt` are skipped and
//! partial rows of unfinished cells are discarded. When every cell is done
//! the rows are written, in grid order, to `results.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gtconn_core::entropy::EntropyKind;
use gtconn_core::exec::{Executor, Sequential};
use gtconn_core::sim::NoiseSpec;

use crate::config::{hash_json, ExperimentConfig, Mode};
use crate::error::{AppError, AppResult};
use crate::io::{self, Provenance, ResultRow, RESULTS_HEADER};
use crate::pipeline::{result_rows, run_mode};
use crate::runtime::RunClock;

pub const RESULTS_FILE: &str = "results.csv";
pub const PARTIAL_FILE: &str = "results.partial.csv";
pub const DONE_FILE: &str = "done.txt";

/// One grid point: a full configuration, a mode and a seed.
#[derive(Debug, Clone)]
pub struct Cell {
    pub config: ExperimentConfig,
    pub mode: Mode,
    /// Hash of everything except the seed.
    pub config_id: String,
}

impl Cell {
    pub fn key(&self) -> String {
        format!("{}:{}", self.config_id, self.config.seed)
    }
}

fn axis<T: Clone>(values: &Option<Vec<T>>, base: T) -> Vec<T> {
    values.clone().unwrap_or_else(|| vec![base])
}

/// Expand the grid in a fixed order: n, theta, s, alpha, beta, assumed,
/// sigma, mode, seed (seed varies fastest).
pub fn cells(base: &ExperimentConfig) -> AppResult<Vec<Cell>> {
    let g = &base.sweep;
    let base_sigma = match base.inference.entropy {
        EntropyKind::Quadratic { sigma } => Some(sigma),
        _ => None,
    };
    let sigmas: Vec<Option<f64>> = match &g.sigma {
        Some(v) => v.iter().map(|&s| Some(s)).collect(),
        None => vec![base_sigma],
    };
    let mut out = Vec::new();
    for n in axis(&g.n, base.network.n) {
        for theta in axis(&g.theta, base.network.theta) {
            for s in axis(&g.s, base.design.s) {
                for alpha in axis(&g.alpha, base.noise.alpha) {
                    for beta in axis(&g.beta, base.noise.beta) {
                        for assumed in axis(&g.assumed, base.assumed_noise) {
                            for &sigma in &sigmas {
                                for mode in axis(&g.modes, Mode::Offline) {
                                    let mut c = base.clone();
                                    c.sweep = Default::default();
                                    c.output_dir = None;
                                    c.network.n = n;
                                    c.network.theta = theta;
                                    c.design.s = s;
                                    c.noise = NoiseSpec { alpha, beta };
                                    c.assumed_noise = assumed;
                                    if let Some(sigma) = sigma {
                                        c.inference.entropy = EntropyKind::Quadratic { sigma };
                                        c.online.entropy = EntropyKind::Quadratic { sigma };
                                    }
                                    c.validate()?;
                                    let mut id_cfg = c.clone();
                                    id_cfg.seed = 0;
                                    let config_id = hash_json(&(&id_cfg, mode));
                                    for seed in axis(&g.seeds, base.seed) {
                                        let mut cs = c.clone();
                                        cs.seed = seed;
                                        out.push(Cell {
                                            config: cs,
                                            mode,
                                            config_id: config_id.clone(),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub cells: usize,
    /// Cells already complete before this invocation.
    pub skipped: usize,
    pub rows: usize,
}

fn read_done(path: &Path) -> AppResult<BTreeSet<String>> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s.lines().filter(|l| !l.is_empty()).map(str::to_string).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeSet::new()),
        Err(e) => Err(AppError::io(path, e)),
    }
}

fn read_partial(path: &Path) -> AppResult<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| AppError::Csv { path: path.to_path_buf(), source })?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        match rec {
            Ok(row) => rows.push(row),
            // A torn final line from an interrupted append.
            Err(_) => break,
        }
    }
    Ok(rows)
}

fn row_bytes(rows: &[ResultRow]) -> AppResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|source| AppError::Csv { path: PathBuf::from(PARTIAL_FILE), source })?;
    }
    w.into_inner().map_err(|e| AppError::Config(e.to_string()))
}

/// Run every unfinished cell on `exec` and write `results.csv` under `dir`.
pub fn run_sweep<E: Executor>(exec: &E, base: &ExperimentConfig, dir: &Path) -> AppResult<SweepSummary> {
    let cells = cells(base)?;
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let done_path = dir.join(DONE_FILE);
    let partial_path = dir.join(PARTIAL_FILE);
    let done = read_done(&done_path)?;
    let todo: Vec<usize> = (0..cells.len()).filter(|&i| !done.contains(&cells[i].key())).collect();

    // Drop rows of cells that never reached done.txt.
    let kept: Vec<ResultRow> = read_partial(&partial_path)?
        .into_iter()
        .filter(|r| done.contains(&format!("{}:{}", r.config_id, r.seed)))
        .collect();
    io::write_bytes(&partial_path, &row_bytes(&kept)?)?;

    let writer = Mutex::new(());
    let results = exec.map(todo.len(), |k| -> AppResult<()> {
        let cell = &cells[todo[k]];
        let clock = RunClock::new(cell.config.timing);
        let run = run_mode(&Sequential, &clock, &cell.config, cell.mode, None)?;
        let bytes = row_bytes(&result_rows(&cell.config, &cell.config_id, &run))?;
        let _guard = writer.lock().expect("writer lock");
        io::append_bytes(&partial_path, &bytes)?;
        io::append_bytes(&done_path, format!("{}\n", cell.key()).as_bytes())
    });
    results.into_iter().collect::<AppResult<Vec<()>>>()?;

    let order: BTreeMap<String, usize> = cells.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
    let mut rows: Vec<(usize, ResultRow)> = read_partial(&partial_path)?
        .into_iter()
        .filter_map(|r| order.get(&format!("{}:{}", r.config_id, r.seed)).map(|&i| (i, r)))
        .collect();
    rows.sort_by_key(|(i, r)| (*i, r.test_count));
    rows.dedup_by(|a, b| a.0 == b.0 && a.1.test_count == b.1.test_count);
    let rows: Vec<ResultRow> = rows.into_iter().map(|(_, r)| r).collect();
    // Completion order depends on scheduling; leave the resume files in grid order.
    io::write_bytes(&partial_path, &row_bytes(&rows)?)?;
    let keys: String = cells.iter().map(|c| format!("{}\n", c.key())).collect();
    io::write_bytes(&done_path, keys.as_bytes())?;
    let prov = Provenance {
        config_hash: base.hash(),
        seed: base.seed,
    };
    io::write_csv_with_header(&dir.join(RESULTS_FILE), &prov, &RESULTS_HEADER, &rows)?;
    Ok(SweepSummary {
        cells: cells.len(),
        skipped: cells.len() - todo.len(),
        rows: rows.len(),
    })
}
