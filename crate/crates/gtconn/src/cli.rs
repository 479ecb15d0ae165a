//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::run_bounds;
use crate::config::{ExperimentConfig, Mode, OUT_DIR_ENV};
use crate::error::{AppError, AppResult};
use crate::io::{self, Checkpoint, NetworkBundle, Provenance, RESULTS_HEADER};
use crate::oracle::{pair_case, run_oracle};
use crate::pipeline::{bernoulli_experiment, network, result_rows, run_mode};
use crate::runtime::{RayonExecutor, RunClock};
use crate::sweep::run_sweep;

#[derive(Debug, Parser)]
#[command(name = "gtconn", version, about = "Infer sparse connectivity from noisy ensemble stimulation tests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set network.n=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (falls back to the config, then $GTCONN_OUT_DIR).
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a ground-truth network and a Bernoulli stimulation design.
    Generate,
    /// Simulate an experiment and infer the connectivity.
    Infer {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Warm-start an offline fit from a saved checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the configured parameter grid; resumes an interrupted sweep.
    Sweep,
    /// Compare relaxed posteriors with exact enumeration on small instances.
    Oracle,
    /// Check the entropy-gradient bounds numerically.
    Bounds,
}

struct Context {
    config: ExperimentConfig,
    out: PathBuf,
    exec: RayonExecutor,
}

impl Context {
    fn new(g: &GlobalArgs) -> AppResult<Self> {
        let config = ExperimentConfig::load(g.config.as_deref(), &g.overrides)?;
        let out = config.resolve_out_dir(g.out.as_deref());
        let exec = RayonExecutor::new(g.jobs).map_err(|e| AppError::Usage(format!("--jobs: {e}")))?;
        Ok(Context { config, out, exec })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config.hash(),
            seed: self.config.seed,
        }
    }

    fn write_config(&self) -> AppResult<()> {
        io::write_json(&self.path("config.json"), &self.config)
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    let ctx = Context::new(&cli.global)?;
    ctx.write_config()?;
    match cli.command {
        Command::Generate => generate(&ctx),
        Command::Infer { mode, resume } => infer(&ctx, mode, resume.as_deref()),
        Command::Sweep => {
            let s = run_sweep(&ctx.exec, &ctx.config, &ctx.out)?;
            println!("cells={} skipped={} rows={}", s.cells, s.skipped, s.rows);
            Ok(())
        }
        Command::Oracle => oracle(&ctx),
        Command::Bounds => {
            let report = run_bounds(ctx.config.seed)?;
            io::write_json(&ctx.path("bounds.json"), &report)?;
            println!(
                "w violations={} a violations={} witness min={:.6} feasibility crossings={} pass={}",
                report.w_violations,
                report.a_violations,
                report.witness_min,
                report.feasibility_crossings,
                report.passes()
            );
            Ok(())
        }
    }
}

fn generate(ctx: &Context) -> AppResult<()> {
    let cfg = &ctx.config;
    let net = network(cfg)?;
    let prov = ctx.provenance();
    io::write_network_csv(&ctx.path("network.csv"), &prov, &net)?;
    io::write_json(&ctx.path("network.json"), &NetworkBundle::new(&net, &prov.config_hash))?;
    let (design, _) = bernoulli_experiment(cfg, &net)?;
    io::write_design_csv(&ctx.path("design.csv"), &prov, &design)?;
    let n = net.n();
    let pairs = if cfg.network.allow_self { n * n } else { n * (n - 1) };
    println!(
        "n={n} edges={} mean_in_degree={:.3} expected_in_degree={:.3} density={:.5}",
        net.edge_count(),
        net.edge_count() as f64 / n as f64,
        net.params().expected_k(),
        if pairs == 0 { 0.0 } else { net.edge_count() as f64 / pairs as f64 }
    );
    Ok(())
}

fn infer(ctx: &Context, mode: Mode, resume: Option<&Path>) -> AppResult<()> {
    let cfg = &ctx.config;
    let checkpoint: Option<Checkpoint> = resume.map(io::read_json).transpose()?;
    let clock = RunClock::new(cfg.timing);
    let run = run_mode(&ctx.exec, &clock, cfg, mode, checkpoint.as_ref())?;
    let prov = ctx.provenance();
    let name = mode.as_str();
    io::write_trajectory_csv(&ctx.path(&format!("trajectory_{name}.csv")), &prov, name, &run.trajectory)?;
    let rows = result_rows(cfg, &cfg.hash(), &run);
    io::write_csv_with_header(&ctx.path(&format!("results_{name}.csv")), &prov, &RESULTS_HEADER, &rows)?;
    if cfg.write_checkpoint {
        if let Some(ck) = &run.checkpoint {
            io::write_json(&ctx.path(&format!("checkpoint_{name}.json")), ck)?;
        }
    }
    if let Some(p) = run.trajectory.last() {
        println!(
            "mode={name} tests={} specificity={:.4} sensitivity={:.4}",
            p.tests,
            p.metrics.specificity(),
            p.metrics.sensitivity()
        );
    }
    Ok(())
}

fn oracle(ctx: &Context) -> AppResult<()> {
    let cfg = &ctx.config.oracle;
    let (rows, summary) = run_oracle(&ctx.exec, cfg, ctx.config.seed)?;
    io::write_csv_with_header(
        &ctx.path("oracle.csv"),
        &ctx.provenance(),
        &["instance", "n", "tests", "neuron", "exact", "relaxed", "converged"],
        &rows,
    )?;
    let (relaxed, exact) = pair_case(cfg)?;
    let report = serde_json::json!({
        "summary": summary,
        "pair_case": { "relaxed": relaxed, "exact": exact },
    });
    io::write_json(&ctx.path("oracle.json"), &report)?;
    println!(
        "instances={} converged={} spearman={} agreement={:.4} pair relaxed={:.4} exact={:.4}",
        summary.instances,
        summary.converged,
        summary.spearman.map_or("undefined".to_string(), |r| format!("{r:.4}")),
        summary.agreement,
        relaxed,
        exact
    );
    Ok(())
}
