//! `rotsync` command line: single-run simulation, estimation and tracking,
//! plus Monte Carlo batches with per-step quantile aggregation.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
//! 4 numerical failure. Failed commands remove the files they wrote.

pub mod config;
pub mod error;
pub mod io;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rotsync::experiment::{
    aggregate, compare_tracking, estimate_run, run_batch, AggregateRow, BatchConfig, EstimateRow,
};
use rotsync::simulation::simulate;
use rotsync::stats::median;
use rotsync::{assess, SimRun};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_csv, read_sim_run, write_sim_run, EstimateCsvRow, OutputDir, TrackRow, VerdictRow};
use crate::plot::{Band, Chart, Series};

pub const ESTIMATES: &str = "estimates.csv";
pub const VERDICTS: &str = "verdicts.csv";
pub const AGGREGATE: &str = "aggregate.csv";

#[derive(Debug, Parser)]
#[command(name = "rotsync", version, about = "Time-offset estimation between rigidly mounted sensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one run and write its CSV set.
    Simulate(SimulateArgs),
    /// Estimate offsets over a simulated run.
    Estimate(EstimateArgs),
    /// Track the target with raw, corrected and oracle-corrected stamps.
    Track(TrackArgs),
    /// Run a seeded batch and aggregate per-step quantiles.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config; every key has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides `sim.rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run directory written by `simulate`. Outputs go here unless `--out` is set.
    #[arg(long)]
    pub run: PathBuf,
    /// Accepted for symmetry; estimation is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub run: PathBuf,
    /// Estimates CSV; defaults to `estimates.csv` in the run directory.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Accepted for symmetry; tracking is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides `experiment.base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or unset uses one per CPU.
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Track(a) => cmd_track(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
    }
}

fn output_dir(common: &Common, cfg: &ExperimentConfig, fallback: &Path) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.experiment.output_dir.clone())
        .unwrap_or_else(|| fallback.to_path_buf())
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.sim.rng_seed = seed;
    }
    let run = simulate(&cfg.sim, &cfg.profile())?;
    let mut out = OutputDir::create(&output_dir(&args.common, &cfg, Path::new("run")))?;
    write_sim_run(&mut out, &run, &cfg)?;
    println!("wrote {} steps to {}", cfg.sim.coarse_steps, out.path().display());
    out.commit();
    Ok(())
}

/// Run directory plus the config to apply to it; an explicit `--config`
/// replaces everything but the simulation settings and profile.
fn load_run(run_dir: &Path, config: Option<&Path>) -> CliResult<(SimRun, ExperimentConfig)> {
    let (run, echo) = read_sim_run(run_dir)?;
    let cfg = match config {
        None => echo,
        Some(p) => ExperimentConfig {
            sim: echo.sim,
            profile: echo.profile,
            ..ExperimentConfig::load(Some(p))?
        },
    };
    Ok((run, cfg))
}

fn first_change(truth: &[f64]) -> u64 {
    truth
        .windows(2)
        .position(|p| p[0] != p[1])
        .map_or(truth.len(), |i| i + 1) as u64
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let (run, cfg) = load_run(&args.run, args.common.config.as_deref())?;
    if cfg.estimator.window_size > run.config.coarse_steps {
        return Err(CliError::Config(format!(
            "estimator.window_size {} exceeds the run's {} steps",
            cfg.estimator.window_size, run.config.coarse_steps
        )));
    }
    let (rows, _) = estimate_run(&run, &cfg.estimator)?;
    let warmup = first_change(&run.truth_offset);
    let (u_max, offset_min) = cfg.strategy.verdict_thresholds(&rows, warmup, &cfg.estimator)?;
    let saturated = cfg.estimator.saturated_uncertainty();

    let mut out = OutputDir::create(&output_dir(&args.common, &cfg, &args.run))?;
    out.write_csv(
        ESTIMATES,
        rows.iter().map(|r| EstimateCsvRow {
            k: r.step,
            offset: r.offset,
            uncertainty: r.uncertainty,
            truth_offset: r.truth,
            abs_error: r.abs_error,
            saturated: r.uncertainty >= saturated,
        }),
    )?;
    out.write_csv(
        VERDICTS,
        rows.iter().map(|r| {
            let v = assess(&r.estimate(), u_max, offset_min);
            VerdictRow {
                k: v.timestamp,
                state: v.state.to_string(),
                offset: v.offset,
                uncertainty: v.uncertainty,
            }
        }),
    )?;
    let errs: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    println!(
        "{} estimates, median |error| {:.4} steps, u_max {u_max:.4}",
        rows.len(),
        median(&errs)
    );
    out.commit();
    Ok(())
}

pub fn cmd_track(args: &TrackArgs) -> CliResult<()> {
    let (run, cfg) = load_run(&args.run, args.common.config.as_deref())?;
    let est_path = args
        .estimates
        .clone()
        .unwrap_or_else(|| args.run.join(ESTIMATES));
    let rows: Vec<EstimateRow> = read_csv::<EstimateCsvRow>(&est_path)?
        .iter()
        .map(EstimateCsvRow::row)
        .collect();
    let cmp = compare_tracking(&run, &rows, &cfg.estimator, &cfg.strategy, &cfg.tracker)?;
    let mut out = OutputDir::create(&output_dir(&args.common, &cfg, &args.run))?;
    for (name, track) in [
        ("track_uncorrected.csv", &cmp.raw),
        ("track_corrected.csv", &cmp.corrected),
        ("track_oracle.csv", &cmp.oracle),
    ] {
        out.write_csv(name, track.iter().map(TrackRow::from))?;
    }
    let last = |t: &[rotsync::TrackPoint]| t.last().map_or(f64::NAN, |p| p.state.speed());
    println!(
        "final speed: uncorrected {:.4}, corrected {:.4}, oracle {:.4} m/s ({:?})",
        last(&cmp.raw),
        last(&cmp.corrected),
        last(&cmp.oracle),
        cmp.strategy
    );
    out.commit();
    Ok(())
}

#[derive(Debug, Serialize)]
struct AggregateCsvRow {
    k: u64,
    truth_offset: f64,
    estimate_median: f64,
    estimate_q25: f64,
    estimate_q75: f64,
    abs_error_median: f64,
    uncertainty_median: f64,
}

impl From<&AggregateRow> for AggregateCsvRow {
    fn from(r: &AggregateRow) -> Self {
        Self {
            k: r.step,
            truth_offset: r.truth,
            estimate_median: r.estimate_median,
            estimate_q25: r.estimate_q25,
            estimate_q75: r.estimate_q75,
            abs_error_median: r.abs_error_median,
            uncertainty_median: r.uncertainty_median,
        }
    }
}

pub fn offset_chart(agg: &[AggregateRow]) -> Chart {
    let at = |f: fn(&AggregateRow) -> f64| agg.iter().map(|r| (r.step as f64, f(r))).collect();
    Chart {
        title: "Time offset: truth and estimate".into(),
        x_label: "coarse step".into(),
        y_label: "offset [steps]".into(),
        series: vec![
            Series {
                label: "truth".into(),
                color: "black",
                points: at(|r| r.truth),
            },
            Series {
                label: "estimate median".into(),
                color: "#c0392b",
                points: at(|r| r.estimate_median),
            },
        ],
        bands: vec![Band {
            label: "estimate q25-q75".into(),
            color: "#c0392b",
            lower: at(|r| r.estimate_q25),
            upper: at(|r| r.estimate_q75),
        }],
        secondary: None,
    }
}

pub fn error_chart(agg: &[AggregateRow]) -> Chart {
    let at = |f: fn(&AggregateRow) -> f64| agg.iter().map(|r| (r.step as f64, f(r))).collect();
    Chart {
        title: "Estimation error and uncertainty".into(),
        x_label: "coarse step".into(),
        y_label: "median |error| [steps]".into(),
        series: vec![Series {
            label: "median |error|".into(),
            color: "#c0392b",
            points: at(|r| r.abs_error_median),
        }],
        bands: Vec::new(),
        secondary: Some((
            "median uncertainty".into(),
            Series {
                label: "median uncertainty".into(),
                color: "#2e86c1",
                points: at(|r| r.uncertainty_median),
            },
        )),
    }
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.experiment.base_seed = seed;
    }
    let batch = BatchConfig {
        sim: cfg.sim,
        estimator: cfg.estimator,
        profile: cfg.profile(),
        runs: cfg.experiment.runs,
        base_seed: cfg.experiment.base_seed,
    };
    let outcomes = run_batch(&batch, args.jobs.unwrap_or(0))?;
    let nanos: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.step_nanos.iter().map(|&n| n as f64))
        .collect();
    let rows: Vec<Vec<EstimateRow>> = outcomes.into_iter().map(|o| o.rows).collect();
    let agg = aggregate(&rows)?;

    let mut out = OutputDir::create(&output_dir(&args.common, &cfg, Path::new("montecarlo")))?;
    out.write_text(io::CONFIG_ECHO, &cfg.echo())?;
    out.write_csv(AGGREGATE, agg.iter().map(AggregateCsvRow::from))?;
    out.write_text("offset.svg", &offset_chart(&agg).to_svg())?;
    out.write_text("error_uncertainty.svg", &error_chart(&agg).to_svg())?;
    println!(
        "{} runs, median estimator time per step {:.3} ms",
        batch.runs,
        median(&nanos) / 1e6
    );
    out.commit();
    Ok(())
}
