//! `nvs4d`: batch front end for calibration, metrics and the toy diffusion model.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 partial failure.

mod cmd;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cmd::Status;
use config::{config_error, resolve_seed, Config, MetricKind};
use report::emit;

#[derive(Debug, Parser)]
#[command(name = "nvs4d", version, about = "Evaluation and calibration tools for posed multi-view generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Random seed; overrides the config and NVS4D_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(short, long)]
    jobs: Option<usize>,
    /// Print the resolved plan and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recover per-scene metric scale and drop the least consistent scenes.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        discard_fraction: Option<f64>,
        #[arg(long)]
        min_points: Option<usize>,
    },
    /// Per-scene metric report as CSV.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',')]
        which: Option<Vec<MetricKind>>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample the Gaussian toy model and report moments against the exact conditional.
    ToySample {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Two-stage guidance-weight sweep on the toy model.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Check dataset-mixture draw frequencies and window spans.
    MixtureCheck {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
    },
}

#[derive(Serialize)]
struct Plan<'a, T: Serialize> {
    command: &'a str,
    seed: Option<u64>,
    jobs: usize,
    settings: T,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    scenes: &'a [config::SceneManifest],
}

fn print_plan<T: Serialize>(
    command: &str,
    seed: Option<u64>,
    jobs: usize,
    settings: T,
    scenes: &[config::SceneManifest],
) -> anyhow::Result<Status> {
    let plan = Plan { command, seed, jobs, settings, scenes };
    print!("{}", toml::to_string(&plan).context("rendering plan")?);
    Ok(Status::Ok)
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Calibrate { common, out_dir, discard_fraction, min_points } => {
            let mut cfg = Config::load(&common.config)?;
            cfg.require_scenes()?;
            let c = &mut cfg.calibrate;
            c.out_dir = out_dir.or(c.out_dir.take());
            c.discard_fraction = discard_fraction.unwrap_or(c.discard_fraction);
            c.min_points = min_points.unwrap_or(c.min_points);
            let out_dir = c.out_dir.clone().ok_or_else(|| config_error("no output directory: set calibrate.out_dir or --out-dir"))?;
            let jobs = common.jobs.or(cfg.jobs).unwrap_or(0);
            if common.dry_run {
                return print_plan("calibrate", None, jobs, &cfg.calibrate, &cfg.scenes);
            }
            let opts = cmd::calibrate::Options {
                out_dir,
                discard_fraction: cfg.calibrate.discard_fraction,
                min_points: cfg.calibrate.min_points,
            };
            pool(jobs)?.install(|| cmd::calibrate::run(&cfg.scenes, &opts))
        }
        Command::Metrics { common, which, out } => {
            let mut cfg = Config::load(&common.config)?;
            cfg.require_scenes()?;
            let m = &mut cfg.metrics;
            m.which = which.unwrap_or(std::mem::take(&mut m.which));
            m.out = out.or(m.out.take());
            if m.which.is_empty() {
                return Err(config_error("no metrics requested"));
            }
            let jobs = common.jobs.or(cfg.jobs).unwrap_or(0);
            if common.dry_run {
                return print_plan("metrics", None, jobs, &cfg.metrics, &cfg.scenes);
            }
            let opts = cmd::metrics::Options {
                which: cfg.metrics.which.clone(),
                tsed: nvs4d_core::TsedConfig { threshold: cfg.metrics.tsed_threshold, min_matches: cfg.metrics.min_matches },
            };
            let (table, status) = pool(jobs)?.install(|| cmd::metrics::report(&cfg.scenes, &opts))?;
            emit(&table.to_csv(), cfg.metrics.out.as_deref())?;
            Ok(status)
        }
        Command::ToySample { common, out, samples_out, steps, n_samples, weights } => {
            let cfg = Config::load(&common.config)?;
            let mut toy = cfg.toy.ok_or_else(|| config_error("config has no [toy] section"))?;
            toy.out = out.or(toy.out);
            toy.samples_out = samples_out.or(toy.samples_out);
            toy.world.steps = steps.unwrap_or(toy.world.steps);
            toy.world.n_samples = n_samples.unwrap_or(toy.world.n_samples);
            toy.weights = weights.unwrap_or(toy.weights);
            let seed = resolve_seed(common.seed, cfg.seed)?;
            let jobs = common.jobs.or(cfg.jobs).unwrap_or(0);
            if common.dry_run {
                return print_plan("toy-sample", Some(seed), jobs, &toy, &[]);
            }
            let result = pool(jobs)?.install(|| cmd::toy::toy_sample(&toy, seed))?;
            eprintln!("max mean error {:.4}, covariance error {:.4}", result.max_mean_error, result.cov_error);
            emit(&result.moments.to_csv(), toy.out.as_deref())?;
            if let Some(p) = &toy.samples_out {
                emit(&cmd::toy::samples_table(&result.samples).to_csv(), Some(p))?;
            }
            Ok(Status::Ok)
        }
        Command::Sweep { common, out, steps, n_samples } => {
            let cfg = Config::load(&common.config)?;
            let mut sweep = cfg.sweep.ok_or_else(|| config_error("config has no [sweep] section"))?;
            sweep.out = out.or(sweep.out);
            sweep.world.steps = steps.unwrap_or(sweep.world.steps);
            sweep.world.n_samples = n_samples.unwrap_or(sweep.world.n_samples);
            let seed = resolve_seed(common.seed, cfg.seed)?;
            let jobs = common.jobs.or(cfg.jobs).unwrap_or(0);
            if common.dry_run {
                return print_plan("sweep", Some(seed), jobs, &sweep, &[]);
            }
            let table = pool(jobs)?.install(|| cmd::toy::sweep(&sweep, seed))?;
            emit(&table.to_csv(), sweep.out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::MixtureCheck { common, out, draws } => {
            let cfg = Config::load(&common.config)?;
            let mut mix = cfg.mixture.ok_or_else(|| config_error("config has no [mixture] section"))?;
            mix.out = out.or(mix.out);
            mix.draws = draws.unwrap_or(mix.draws);
            let seed = resolve_seed(common.seed, cfg.seed)?;
            if common.dry_run {
                return print_plan("mixture-check", Some(seed), 1, &mix, &[]);
            }
            let (table, status) = cmd::mixture::run(&mix, seed)?;
            emit(&table.to_csv(), mix.out.as_deref())?;
            Ok(status)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
