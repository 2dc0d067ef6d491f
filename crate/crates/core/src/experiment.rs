//! Monte Carlo harness: batches of seeded simulation runs, per-step
//! quantile aggregation, and the tracking-impact comparison between raw,
//! estimator-corrected and oracle-corrected timestamps.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assessment::{
    warmup_u_max, CorrectionSession, CorrectionStrategy, SensorId, StampedMeasurement,
};
use crate::error::{Result, SyncError};
use crate::estimator::{EstimatorConfig, OffsetEstimate, OnlineEstimator};
use crate::simulation::{simulate, ErrorProfile, SimConfig, SimRun};
use crate::stats::{median, quantile_sorted, rms};
use crate::tracking::{run_tracker, GaussianState, MeasurementModel, ProcessModel, TrackPoint};

/// Estimate for one coarse step next to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub step: u64,
    pub offset: f64,
    pub uncertainty: f64,
    pub truth: f64,
    pub abs_error: f64,
}

impl EstimateRow {
    pub fn estimate(&self) -> OffsetEstimate {
        OffsetEstimate {
            timestamp: self.step,
            offset: self.offset,
            uncertainty: self.uncertainty,
            score_curve: None,
        }
    }
}

/// Streams a run through the online estimator. Also returns the wall time
/// of each estimating push, in nanoseconds.
pub fn estimate_run(run: &SimRun, cfg: &EstimatorConfig) -> Result<(Vec<EstimateRow>, Vec<u64>)> {
    let r1 = run.magnitudes(0);
    let r2 = run.magnitudes(1);
    let mut online = OnlineEstimator::new(*cfg)?;
    let mut rows = Vec::with_capacity(r1.len());
    let mut nanos = Vec::with_capacity(r1.len());
    for (k, (&a, &b)) in r1.iter().zip(&r2).enumerate() {
        let started = Instant::now();
        let est = online.push(k as u64, a, b)?;
        let elapsed = started.elapsed();
        if let Some(est) = est {
            nanos.push(elapsed.as_nanos() as u64);
            let truth = run.truth_offset[k];
            rows.push(EstimateRow {
                step: est.timestamp,
                offset: est.offset,
                uncertainty: est.uncertainty,
                truth,
                abs_error: (est.offset - truth).abs(),
            });
        }
    }
    Ok((rows, nanos))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Measurement std assumed by the filter, metres.
    pub measurement_std: f64,
    /// Process noise as position std per second of prediction, metres.
    pub process_std: f64,
    /// Initial velocity variance, (m/s)².
    pub initial_velocity_var: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            measurement_std: 0.05,
            process_std: 0.001,
            initial_velocity_var: 1.0,
        }
    }
}

impl TrackerConfig {
    pub fn models(&self, step_duration: f64) -> Result<(ProcessModel, MeasurementModel)> {
        if !(self.initial_velocity_var > 0.0) {
            return Err(SyncError::Config("initial_velocity_var must be positive".into()));
        }
        Ok((
            ProcessModel::from_position_std(self.process_std * step_duration, step_duration)?,
            MeasurementModel::isotropic(self.measurement_std)?,
        ))
    }
}

/// How sensor-2 stamps are treated before filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StampMode<'a> {
    Raw,
    Estimated {
        estimates: &'a [EstimateRow],
        strategy: CorrectionStrategy,
    },
    /// Ground-truth offsets.
    Oracle,
}

/// Both sensors' measurements with stamps per `mode`, ordered by time. Ties
/// keep the reference sensor first. Discarded measurements are dropped.
pub fn merged_measurements(run: &SimRun, mode: StampMode<'_>) -> Result<Vec<StampedMeasurement>> {
    let mut merged: Vec<StampedMeasurement> = run.measurements[0].clone();
    match mode {
        StampMode::Raw => merged.extend_from_slice(&run.measurements[1]),
        StampMode::Oracle => merged.extend(run.measurements[1].iter().map(|m| {
            let k = m.timestamp.round() as usize;
            StampedMeasurement {
                timestamp: m.timestamp - run.truth_offset[k],
                ..*m
            }
        })),
        StampMode::Estimated { estimates, strategy } => {
            let mut session = CorrectionSession::new(strategy)?;
            for row in estimates {
                session.push_estimate(row.estimate())?;
            }
            merged.extend(
                run.measurements[1]
                    .iter()
                    .filter_map(|m| session.process(m).resolve(*m)),
            );
        }
    }
    // Corrections can reorder stamps; re-sort rather than reject.
    merged.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.sensor.cmp(&b.sensor))
    });
    Ok(merged)
}

pub fn track(run: &SimRun, mode: StampMode<'_>, cfg: &TrackerConfig) -> Result<Vec<TrackPoint>> {
    let measurements = merged_measurements(run, mode)?;
    let Some(first) = measurements.first() else {
        return Ok(Vec::new());
    };
    let (pm, mm) = cfg.models(run.config.step_duration)?;
    let init = GaussianState::from_measurement(
        first.position,
        cfg.measurement_std.powi(2),
        cfg.initial_velocity_var,
    );
    run_tracker(&measurements, init, &pm, &mm, run.config.step_duration)
}

/// Norm of the velocity error of every track point stamped at or after `from_step`.
pub fn velocity_errors(track: &[TrackPoint], truth: [f64; 2], from_step: f64) -> Vec<f64> {
    track
        .iter()
        .filter(|p| p.timestamp >= from_step)
        .map(|p| {
            let v = p.state.velocity();
            (v[0] - truth[0]).hypot(v[1] - truth[1])
        })
        .collect()
}

/// Tracks of one run under the three stamp treatments.
#[derive(Debug, Clone)]
pub struct TrackingComparison {
    pub raw: Vec<TrackPoint>,
    pub corrected: Vec<TrackPoint>,
    pub oracle: Vec<TrackPoint>,
    pub strategy: CorrectionStrategy,
}

/// Resolves a strategy whose uncertainty gate is left to the warm-up rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    AlwaysApply,
    UncertaintyGate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_max: Option<f64>,
    },
    Hybrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_max: Option<f64>,
        #[serde(default = "default_offset_min")]
        offset_min: f64,
    },
}

fn default_offset_min() -> f64 {
    0.5
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec::Hybrid {
            u_max: None,
            offset_min: default_offset_min(),
        }
    }
}

impl StrategySpec {
    /// Fills a missing `u_max` with the upper quartile of the unsaturated
    /// uncertainties seen before `warmup_end`. The gate is always kept below
    /// the saturation value, so estimates from motionless windows are never
    /// trusted.
    pub fn resolve(
        &self,
        estimates: &[EstimateRow],
        warmup_end: u64,
        estimator: &EstimatorConfig,
    ) -> Result<CorrectionStrategy> {
        let saturated = estimator.saturated_uncertainty();
        let ceiling = saturated * (1.0 - f64::EPSILON);
        let auto = || {
            if !estimates.iter().any(|e| e.step < warmup_end) {
                return Err(SyncError::Config(format!(
                    "no estimates before step {warmup_end} to derive u_max from; set it explicitly"
                )));
            }
            let ests: Vec<OffsetEstimate> = estimates
                .iter()
                .filter(|e| e.uncertainty < saturated)
                .map(EstimateRow::estimate)
                .collect();
            Ok(warmup_u_max(&ests, warmup_end).unwrap_or(ceiling))
        };
        let gate = |u_max: Option<f64>| -> Result<f64> { Ok(u_max.map_or_else(auto, Ok)?.min(ceiling)) };
        let strategy = match *self {
            StrategySpec::AlwaysApply => CorrectionStrategy::AlwaysApply,
            StrategySpec::UncertaintyGate { u_max } => CorrectionStrategy::UncertaintyGate {
                u_max: gate(u_max)?,
            },
            StrategySpec::Hybrid { u_max, offset_min } => CorrectionStrategy::Hybrid {
                u_max: gate(u_max)?,
                offset_min,
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }

    /// Thresholds for verdicts: the strategy's own where it has them, the
    /// warm-up rule and the default `offset_min` otherwise.
    pub fn verdict_thresholds(
        &self,
        estimates: &[EstimateRow],
        warmup_end: u64,
        estimator: &EstimatorConfig,
    ) -> Result<(f64, f64)> {
        let as_hybrid = match *self {
            StrategySpec::AlwaysApply => StrategySpec::default(),
            StrategySpec::UncertaintyGate { u_max } => StrategySpec::Hybrid {
                u_max,
                offset_min: default_offset_min(),
            },
            hybrid => hybrid,
        };
        match as_hybrid.resolve(estimates, warmup_end, estimator)? {
            CorrectionStrategy::Hybrid { u_max, offset_min } => Ok((u_max, offset_min)),
            _ => unreachable!("hybrid resolves to hybrid"),
        }
    }
}

/// End of the in-sync warm-up phase: the first offset change, or the end
/// of the run when the offset never changes.
pub fn warmup_end(run: &SimRun) -> u64 {
    run.profile
        .change_points(run.config.coarse_steps)
        .first()
        .copied()
        .unwrap_or(run.config.coarse_steps) as u64
}

pub fn compare_tracking(
    run: &SimRun,
    estimates: &[EstimateRow],
    estimator: &EstimatorConfig,
    strategy: &StrategySpec,
    cfg: &TrackerConfig,
) -> Result<TrackingComparison> {
    let strategy = strategy.resolve(estimates, warmup_end(run), estimator)?;
    Ok(TrackingComparison {
        raw: track(run, StampMode::Raw, cfg)?,
        corrected: track(run, StampMode::Estimated { estimates, strategy }, cfg)?,
        oracle: track(run, StampMode::Oracle, cfg)?,
        strategy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub sim: SimConfig,
    pub estimator: EstimatorConfig,
    pub profile: ErrorProfile,
    pub runs: usize,
    /// Run `i` uses seed `base_seed + i`.
    pub base_seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            estimator: EstimatorConfig::default(),
            profile: ErrorProfile::None,
            runs: 1000,
            base_seed: 0,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(SyncError::Config("runs must be at least 1".into()));
        }
        self.sim.validate()?;
        self.estimator.validate()?;
        self.profile.validate(self.sim.fine_factor)?;
        if self.estimator.window_size > self.sim.coarse_steps {
            return Err(SyncError::Config(format!(
                "window_size {} exceeds coarse_steps {}",
                self.estimator.window_size, self.sim.coarse_steps
            )));
        }
        Ok(())
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }

    pub fn sim_for(&self, index: usize) -> SimConfig {
        SimConfig {
            rng_seed: self.seed(index),
            ..self.sim
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub run: SimRun,
    pub rows: Vec<EstimateRow>,
    pub step_nanos: Vec<u64>,
}

/// Simulates and estimates one batch member.
pub fn execute_run(cfg: &BatchConfig, index: usize) -> Result<RunOutcome> {
    let seed = cfg.seed(index);
    let go = || -> Result<RunOutcome> {
        let run = simulate(&cfg.sim_for(index), &cfg.profile)?;
        let (rows, step_nanos) = estimate_run(&run, &cfg.estimator)?;
        Ok(RunOutcome {
            index,
            seed,
            run,
            rows,
            step_nanos,
        })
    };
    go().map_err(|e| e.context(format!("run {index} (seed {seed})")))
}

/// Runs every batch member on a pool of `jobs` workers (0 = one per CPU).
/// Results come back in run-index order regardless of scheduling.
pub fn run_batch(cfg: &BatchConfig, jobs: usize) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SyncError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| execute_run(cfg, i))
            .collect()
    })
}

/// Per-step quantiles across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub truth: f64,
    pub estimate_median: f64,
    pub estimate_q25: f64,
    pub estimate_q75: f64,
    pub abs_error_median: f64,
    pub uncertainty_median: f64,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Aggregates estimate rows step by step. All runs must cover the same
/// steps; the result does not depend on the order of `runs`.
pub fn aggregate(runs: &[Vec<EstimateRow>]) -> Result<Vec<AggregateRow>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(SyncError::Argument("runs cover different steps".into()));
    }
    (0..first.len())
        .map(|i| {
            let step = first[i].step;
            if runs.iter().any(|r| r[i].step != step) {
                return Err(SyncError::Argument(format!("runs disagree at row {i}")));
            }
            let est = sorted(runs.iter().map(|r| r[i].offset).collect());
            let err = sorted(runs.iter().map(|r| r[i].abs_error).collect());
            let unc = sorted(runs.iter().map(|r| r[i].uncertainty).collect());
            let truth = sorted(runs.iter().map(|r| r[i].truth).collect());
            Ok(AggregateRow {
                step,
                truth: quantile_sorted(&truth, 0.5),
                estimate_median: quantile_sorted(&est, 0.5),
                estimate_q25: quantile_sorted(&est, 0.25),
                estimate_q75: quantile_sorted(&est, 0.75),
                abs_error_median: quantile_sorted(&err, 0.5),
                uncertainty_median: quantile_sorted(&unc, 0.5),
            })
        })
        .collect()
}

/// Steps whose whole estimation window saw one constant true offset.
pub fn steady_state_steps(truth: &[f64], window: usize) -> Vec<usize> {
    (window.saturating_sub(1)..truth.len())
        .filter(|&k| {
            let win = &truth[k + 1 - window..=k];
            win.iter().all(|&v| v == win[0])
        })
        .collect()
}

/// A rise of the median error after a step, once uncertainty had settled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponseViolation {
    pub change_step: u64,
    pub settled_step: u64,
    pub step: u64,
    pub rise: f64,
}

/// Checks that the median absolute error never rises between each change
/// point and the next one, starting from the first step whose median
/// uncertainty falls below its median over the preceding segment. Change
/// points whose uncertainty never settles are skipped.
pub fn step_response_violations(
    agg: &[AggregateRow],
    change_points: &[usize],
) -> Vec<StepResponseViolation> {
    let mut violations = Vec::new();
    for (i, &change) in change_points.iter().enumerate() {
        let change = change as u64;
        let prev = if i == 0 { 0 } else { change_points[i - 1] as u64 };
        let next = change_points.get(i + 1).map_or(u64::MAX, |&c| c as u64);
        let before: Vec<f64> = agg
            .iter()
            .filter(|r| r.step >= prev && r.step < change)
            .map(|r| r.uncertainty_median)
            .collect();
        if before.is_empty() {
            continue;
        }
        let reference = median(&before);
        let segment: Vec<&AggregateRow> = agg
            .iter()
            .filter(|r| r.step >= change && r.step < next)
            .collect();
        let Some(start) = segment.iter().position(|r| r.uncertainty_median < reference) else {
            continue;
        };
        for pair in segment[start..].windows(2) {
            let rise = pair[1].abs_error_median - pair[0].abs_error_median;
            // Medians land on the 1/b grid; ignore float dust.
            if rise > 1e-9 {
                violations.push(StepResponseViolation {
                    change_step: change,
                    settled_step: segment[start].step,
                    step: pair[1].step,
                    rise,
                });
            }
        }
    }
    violations
}

/// Median absolute error among the lowest-uncertainty quartile of all
/// estimates, next to the overall median absolute error.
pub fn uncertainty_coupling(rows: &[EstimateRow]) -> (f64, f64) {
    let uncertainties = sorted(rows.iter().map(|r| r.uncertainty).collect());
    let cut = quantile_sorted(&uncertainties, 0.25);
    let low: Vec<f64> = rows
        .iter()
        .filter(|r| r.uncertainty <= cut)
        .map(|r| r.abs_error)
        .collect();
    let all: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    (median(&low), median(&all))
}

/// Post-change velocity RMSE of the three stamp treatments, pooled over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSummary {
    pub raw_rmse: f64,
    pub corrected_rmse: f64,
    pub oracle_rmse: f64,
}

pub fn summarize_tracking(
    comparisons: &[(TrackingComparison, f64)],
    truth_velocity: [f64; 2],
) -> TrackingSummary {
    let pooled = |pick: fn(&TrackingComparison) -> &Vec<TrackPoint>| {
        let errs: Vec<f64> = comparisons
            .iter()
            .flat_map(|(c, from)| velocity_errors(pick(c), truth_velocity, *from))
            .collect();
        rms(&errs)
    };
    TrackingSummary {
        raw_rmse: pooled(|c| &c.raw),
        corrected_rmse: pooled(|c| &c.corrected),
        oracle_rmse: pooled(|c| &c.oracle),
    }
}

/// Reference sensor measurements only; handy for isolating sensor effects.
pub fn reference_only(ms: &[StampedMeasurement]) -> Vec<StampedMeasurement> {
    ms.iter()
        .filter(|m| m.sensor == SensorId::Reference)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::StepChange;

    fn small_batch(profile: ErrorProfile, runs: usize) -> BatchConfig {
        BatchConfig {
            sim: SimConfig {
                coarse_steps: 80,
                fine_factor: 10,
                noise_level: 0.5,
                ..Default::default()
            },
            estimator: EstimatorConfig {
                window_size: 20,
                interpolation_factor: 4,
                ..Default::default()
            },
            profile,
            runs,
            base_seed: 7,
        }
    }

    #[test]
    fn single_run_aggregate_is_degenerate() {
        let cfg = small_batch(ErrorProfile::None, 1);
        let out = run_batch(&cfg, 1).unwrap();
        let agg = aggregate(&[out[0].rows.clone()]).unwrap();
        for (a, r) in agg.iter().zip(&out[0].rows) {
            assert_eq!(a.estimate_median, r.offset);
            assert_eq!(a.estimate_q25, a.estimate_q75);
            assert_eq!(a.abs_error_median, r.abs_error);
        }
    }

    #[test]
    fn aggregate_ignores_run_order() {
        let cfg = small_batch(ErrorProfile::default_ramp(80), 6);
        let rows: Vec<_> = run_batch(&cfg, 2).unwrap().into_iter().map(|o| o.rows).collect();
        let mut reversed = rows.clone();
        reversed.reverse();
        let a = aggregate(&rows).unwrap();
        assert_eq!(a, aggregate(&reversed).unwrap());
        assert!(a.iter().all(|r| r.estimate_q25 <= r.estimate_median && r.estimate_median <= r.estimate_q75));
    }

    #[test]
    fn batch_is_independent_of_worker_count() {
        let cfg = small_batch(ErrorProfile::default_steps(80), 5);
        let one: Vec<_> = run_batch(&cfg, 1).unwrap().into_iter().map(|o| o.rows).collect();
        let many: Vec<_> = run_batch(&cfg, 4).unwrap().into_iter().map(|o| o.rows).collect();
        assert_eq!(one, many);
    }

    #[test]
    fn failing_run_reports_its_seed() {
        let mut cfg = small_batch(ErrorProfile::None, 2);
        cfg.estimator.window_size = 100;
        assert!(run_batch(&cfg, 1).is_err());
        let err = execute_run(
            &small_batch(
                ErrorProfile::Steps { steps: vec![StepChange { step: 3, offset: 0.05 }] },
                1,
            ),
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("seed 7"), "{err}");
    }

    #[test]
    fn steady_state_needs_a_full_constant_window() {
        let truth = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(steady_state_steps(&truth, 3), vec![2, 5, 6]);
    }

    #[test]
    fn zero_offset_tracks_are_identical() {
        let cfg = small_batch(ErrorProfile::None, 1);
        let out = execute_run(&cfg, 0).unwrap();
        let cmp = compare_tracking(
            &out.run,
            &out.rows,
            &cfg.estimator,
            &StrategySpec::AlwaysApply,
            &TrackerConfig::default(),
        );
        // Estimates may be non-zero under noise; oracle stamps must match raw.
        let cmp = cmp.unwrap();
        assert_eq!(cmp.raw, cmp.oracle);
    }

    #[test]
    fn oracle_stamps_restore_acquisition_times() {
        let mut cfg = small_batch(ErrorProfile::constant(1.5), 1);
        cfg.sim.measurement_std = 0.0;
        let out = execute_run(&cfg, 0).unwrap();
        let merged = merged_measurements(&out.run, StampMode::Oracle).unwrap();
        let speed = cfg.sim.target_speed;
        for m in merged {
            let expected = cfg.sim.target_start[0] + speed * m.timestamp;
            assert!((m.position[0] - expected).abs() < 1e-9);
        }
    }
}
