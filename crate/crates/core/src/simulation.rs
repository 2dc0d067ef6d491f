//! Synthetic two-sensor scenario: an ego vehicle driving a planar figure
//! with two rigidly mounted sensors, a target moving along a straight line,
//! and ground-truth time offsets realized on a fine simulation grid.
//!
//! Motion is generated at `fine_factor` times the sensor rate. Noise is
//! added and sensor 2's sampling is shifted on the fine grid, then the fine
//! motions are batched into coarse per-step motions. This makes fractional
//! offsets (multiples of `1 / fine_factor` steps) exactly realizable.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::assessment::{SensorId, StampedMeasurement};
use crate::error::{Result, SyncError};
use crate::geometry::{chain, RigidMotion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `x = r·sin(a·t)`, `y = r·sin(a·t)·cos(c·t)` over one period `t ∈ [0, 2π)`.
    Lissajous {
        radius: f64,
        sin_factor: f64,
        cos_factor: f64,
    },
    /// Straight drive along +x; produces no rotation at all.
    Straight { speed: f64 },
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::Lissajous {
            radius: 30.0,
            sin_factor: 2.0,
            cos_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub coarse_steps: usize,
    pub fine_factor: usize,
    pub path: PathSpec,
    /// Noise std relative to the mean fine-step motion (0.5 = 50 %).
    pub noise_level: f64,
    pub rng_seed: u64,
    /// Seconds per coarse step.
    pub step_duration: f64,
    /// Target speed along +x in m/s.
    pub target_speed: f64,
    pub target_start: [f64; 2],
    /// Std of the target position measurements in metres.
    pub measurement_std: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            coarse_steps: 200,
            fine_factor: 100,
            path: PathSpec::default(),
            noise_level: 0.5,
            rng_seed: 0,
            step_duration: 1.0,
            target_speed: 0.4,
            target_start: [-40.0, 0.0],
            measurement_std: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SyncError::Config(msg));
        if self.coarse_steps < 2 {
            return bad(format!("coarse_steps must be at least 2, got {}", self.coarse_steps));
        }
        if self.fine_factor < 1 {
            return bad("fine_factor must be at least 1".into());
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise_level must be non-negative, got {}", self.noise_level));
        }
        if !(self.step_duration > 0.0 && self.step_duration.is_finite()) {
            return bad(format!("step_duration must be positive, got {}", self.step_duration));
        }
        if !(self.measurement_std >= 0.0 && self.measurement_std.is_finite()) {
            return bad(format!(
                "measurement_std must be non-negative, got {}",
                self.measurement_std
            ));
        }
        if !self.target_speed.is_finite() || self.target_start.iter().any(|v| !v.is_finite()) {
            return bad("target parameters must be finite".into());
        }
        match self.path {
            PathSpec::Lissajous {
                radius,
                sin_factor,
                cos_factor,
            } if !(radius > 0.0 && sin_factor.is_finite() && cos_factor.is_finite()) => {
                bad("lissajous radius must be positive and factors finite".into())
            }
            PathSpec::Straight { speed } if !speed.is_finite() => {
                bad("path speed must be finite".into())
            }
            _ => Ok(()),
        }
    }

    pub fn fine_steps(&self) -> usize {
        self.coarse_steps * self.fine_factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepChange {
    pub step: usize,
    pub offset: f64,
}

/// Ground-truth lag of sensor 2 over the coarse steps.
///
/// Every profile starts at zero offset; a step change at step 0 makes the
/// offset constant over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorProfile {
    #[default]
    None,
    /// Linear drift from 0 at `start_step` to `final_offset` at `end_step`,
    /// held afterwards.
    Ramp {
        start_step: usize,
        end_step: usize,
        final_offset: f64,
    },
    /// Piecewise constant; each change holds until the next one.
    Steps { steps: Vec<StepChange> },
}

impl ErrorProfile {
    pub fn constant(offset: f64) -> Self {
        ErrorProfile::Steps {
            steps: vec![StepChange { step: 0, offset }],
        }
    }

    /// Up to one step of lag across the middle half of the run.
    pub fn default_ramp(coarse_steps: usize) -> Self {
        ErrorProfile::Ramp {
            start_step: coarse_steps / 4,
            end_step: 3 * coarse_steps / 4,
            final_offset: 1.0,
        }
    }

    /// Jumps of +0.5, +1.0, −0.5 and −1.0 steps at the fifths of the run.
    pub fn default_steps(coarse_steps: usize) -> Self {
        let at = |i: usize| i * coarse_steps / 5;
        ErrorProfile::Steps {
            steps: vec![
                StepChange { step: at(1), offset: 0.5 },
                StepChange { step: at(2), offset: 1.5 },
                StepChange { step: at(3), offset: 1.0 },
                StepChange { step: at(4), offset: 0.0 },
            ],
        }
    }

    pub fn validate(&self, fine_factor: usize) -> Result<()> {
        match self {
            ErrorProfile::None => Ok(()),
            ErrorProfile::Ramp {
                start_step,
                end_step,
                final_offset,
            } => {
                if end_step <= start_step {
                    return Err(SyncError::Config(format!(
                        "ramp must end after it starts ({start_step}..{end_step})"
                    )));
                }
                if !final_offset.is_finite() {
                    return Err(SyncError::Config("ramp offset must be finite".into()));
                }
                Ok(())
            }
            ErrorProfile::Steps { steps } => {
                for pair in steps.windows(2) {
                    if pair[1].step <= pair[0].step {
                        return Err(SyncError::Config(
                            "step changes must be strictly increasing".into(),
                        ));
                    }
                }
                for change in steps {
                    let scaled = change.offset * fine_factor as f64;
                    if !scaled.is_finite() || (scaled - scaled.round()).abs() > 1e-6 {
                        return Err(SyncError::Config(format!(
                            "offset {} at step {} is not a multiple of 1/{fine_factor}",
                            change.offset, change.step
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Nominal offset at coarse step `k`, before grid quantization.
    pub fn offset_at(&self, k: usize) -> f64 {
        match self {
            ErrorProfile::None => 0.0,
            ErrorProfile::Ramp {
                start_step,
                end_step,
                final_offset,
            } => {
                if k <= *start_step {
                    0.0
                } else if k >= *end_step {
                    *final_offset
                } else {
                    final_offset * (k - start_step) as f64 / (end_step - start_step) as f64
                }
            }
            ErrorProfile::Steps { steps } => steps
                .iter()
                .take_while(|c| c.step <= k)
                .last()
                .map_or(0.0, |c| c.offset),
        }
    }

    /// Offset at `k` rounded to whole fine steps.
    pub fn fine_offset_at(&self, k: usize, fine_factor: usize) -> i64 {
        (self.offset_at(k) * fine_factor as f64).round() as i64
    }

    pub fn max_abs_offset(&self, coarse_steps: usize) -> f64 {
        (0..coarse_steps)
            .map(|k| self.offset_at(k).abs())
            .fold(0.0, f64::max)
    }

    /// Steps at which the nominal offset differs from the previous step.
    pub fn change_points(&self, coarse_steps: usize) -> Vec<usize> {
        (1..coarse_steps)
            .filter(|&k| self.offset_at(k) != self.offset_at(k - 1))
            .collect()
    }
}

/// Fine-grid ground truth, indexed by absolute fine step `start..start+len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePaths {
    pub start: i64,
    /// Ego poses in the world frame.
    pub ego: Vec<RigidMotion>,
    /// Target positions in the world frame.
    pub target: Vec<[f64; 2]>,
    pub fine_factor: usize,
    pub coarse_steps: usize,
}

impl FinePaths {
    pub fn len(&self) -> usize {
        self.ego.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ego.is_empty()
    }

    fn slot(&self, fine_index: i64) -> Result<usize> {
        let rel = fine_index - self.start;
        if rel < 0 || rel as usize >= self.ego.len() {
            return Err(SyncError::Simulation(format!(
                "fine index {fine_index} outside simulated range {}..{}",
                self.start,
                self.start + self.ego.len() as i64
            )));
        }
        Ok(rel as usize)
    }

    pub fn ego_at(&self, fine_index: i64) -> Result<RigidMotion> {
        Ok(self.ego[self.slot(fine_index)?])
    }

    pub fn target_at(&self, fine_index: i64) -> Result<[f64; 2]> {
        Ok(self.target[self.slot(fine_index)?])
    }
}

/// Relative per-fine-step motions; element `i` moves from fine step
/// `start + i` to `start + i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineMotions {
    pub start: i64,
    pub motions: Vec<RigidMotion>,
}

impl FineMotions {
    /// The `len` motions starting at absolute fine step `from`.
    pub fn range(&self, from: i64, len: usize) -> Result<&[RigidMotion]> {
        let rel = from - self.start;
        if rel < 0 || rel as usize + len > self.motions.len() {
            return Err(SyncError::Simulation(format!(
                "fine motions {from}..{} fall outside the simulated range {}..{}; increase the margin",
                from + len as i64,
                self.start,
                self.start + self.motions.len() as i64
            )));
        }
        Ok(&self.motions[rel as usize..rel as usize + len])
    }
}

/// Noisy fine motions of both sensors plus the mounting transform used.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMotions {
    /// Pose of sensor 2 in the sensor 1 (ego) frame.
    pub mount: RigidMotion,
    pub sensor1: FineMotions,
    pub sensor2: FineMotions,
    pub rotation_noise_std: f64,
    pub translation_noise_std: f64,
}

/// Position and tangent heading of the figure at parameter `t`.
pub fn lissajous(t: f64, radius: f64, a: f64, c: f64) -> (f64, f64, f64) {
    let x = radius * (a * t).sin();
    let y = radius * (a * t).sin() * (c * t).cos();
    let dx = radius * a * (a * t).cos();
    let dy = radius * (a * (a * t).cos() * (c * t).cos() - c * (a * t).sin() * (c * t).sin());
    (x, y, dy.atan2(dx))
}

/// Ego and target ground truth on the fine grid, with `margin_steps` coarse
/// steps of extra simulation on both sides of `[0, coarse_steps]`.
pub fn generate_paths(cfg: &SimConfig, margin_steps: usize) -> Result<FinePaths> {
    cfg.validate()?;
    let f = cfg.fine_factor as i64;
    let margin = margin_steps as i64 * f;
    let start = -margin;
    let end = cfg.fine_steps() as i64 + margin;
    let total = cfg.fine_steps() as f64;
    let count = (end - start + 1) as usize;
    let mut ego = Vec::with_capacity(count);
    let mut target = Vec::with_capacity(count);
    for i in start..=end {
        let seconds = i as f64 / f as f64 * cfg.step_duration;
        let pose = match cfg.path {
            PathSpec::Lissajous {
                radius,
                sin_factor,
                cos_factor,
            } => {
                let t = 2.0 * PI * i as f64 / total;
                let (x, y, yaw) = lissajous(t, radius, sin_factor, cos_factor);
                RigidMotion::planar(x, y, yaw)
            }
            PathSpec::Straight { speed } => RigidMotion::planar(speed * seconds, 0.0, 0.0),
        };
        ego.push(pose);
        target.push([
            cfg.target_start[0] + cfg.target_speed * seconds,
            cfg.target_start[1],
        ]);
    }
    Ok(FinePaths {
        start,
        ego,
        target,
        fine_factor: cfg.fine_factor,
        coarse_steps: cfg.coarse_steps,
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MOUNT_STREAM: u64 = 1;
const SENSOR1_STREAM: u64 = 2;
const SENSOR2_STREAM: u64 = 3;
const MEASUREMENT_STREAM: u64 = 4;

fn random_mount(rng: &mut ChaCha8Rng) -> RigidMotion {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..PI);
    let t = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.5..0.5),
    );
    RigidMotion::from_axis_angle(Vector3::from(axis), angle, t)
}

fn perturb(
    m: &RigidMotion,
    rot: Option<&Normal<f64>>,
    trans: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> RigidMotion {
    if rot.is_none() && trans.is_none() {
        return *m;
    }
    let mut noise = RigidMotion::identity();
    if let Some(rot) = rot {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        noise =
            RigidMotion::from_axis_angle(Vector3::from(axis), rot.sample(rng), Vector3::zeros());
    }
    if let Some(trans) = trans {
        let d = Vector3::new(trans.sample(rng), trans.sample(rng), trans.sample(rng));
        noise = RigidMotion::new(*noise.rotation(), d);
    }
    m.compose(&noise)
}

fn normal(std: f64) -> Result<Option<Normal<f64>>> {
    if std > 0.0 {
        Normal::new(0.0, std)
            .map(Some)
            .map_err(|e| SyncError::Config(e.to_string()))
    } else {
        Ok(None)
    }
}

/// Relative fine-step motions of both sensors with independent Gaussian
/// noise. The noise std is `noise_level` times the mean fine-step rotation
/// (and translation) magnitude of the noise-free path over the nominal run.
pub fn derive_noisy_motions(
    paths: &FinePaths,
    noise_level: f64,
    seed: u64,
) -> Result<SensorMotions> {
    if paths.len() < 2 {
        return Err(SyncError::Argument("need at least two poses".into()));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(SyncError::Config(format!(
            "noise_level must be non-negative, got {noise_level}"
        )));
    }
    let mount = random_mount(&mut stream_rng(seed, MOUNT_STREAM));
    let ego: Vec<RigidMotion> = paths
        .ego
        .windows(2)
        .map(|p| p[0].inverse().compose(&p[1]))
        .collect();

    let first = (-paths.start).clamp(0, ego.len() as i64) as usize;
    let nominal = (paths.coarse_steps * paths.fine_factor).min(ego.len() - first);
    let span = &ego[first..first + nominal];
    let count = span.len().max(1) as f64;
    let mean_rot = span
        .iter()
        .map(|m| m.rotation_magnitude().value())
        .sum::<f64>()
        / count;
    let mean_trans = span.iter().map(|m| m.translation().norm()).sum::<f64>() / count;
    let rot_std = noise_level * mean_rot;
    let trans_std = noise_level * mean_trans;
    let rot = normal(rot_std)?;
    let trans = normal(trans_std)?;

    // Sensor 2 sits at `mount` in the ego frame, so it sees mount⁻¹ ∘ V ∘ mount.
    let mount_inv = mount.inverse();
    let mut rng1 = stream_rng(seed, SENSOR1_STREAM);
    let mut rng2 = stream_rng(seed, SENSOR2_STREAM);
    let s1 = ego
        .iter()
        .map(|m| perturb(m, rot.as_ref(), trans.as_ref(), &mut rng1))
        .collect();
    let s2 = ego
        .iter()
        .map(|m| {
            perturb(
                &mount_inv.conjugate(m),
                rot.as_ref(),
                trans.as_ref(),
                &mut rng2,
            )
        })
        .collect();
    Ok(SensorMotions {
        mount,
        sensor1: FineMotions {
            start: paths.start,
            motions: s1,
        },
        sensor2: FineMotions {
            start: paths.start,
            motions: s2,
        },
        rotation_noise_std: rot_std,
        translation_noise_std: trans_std,
    })
}

/// Fine motions sensor 2 delivers for coarse steps `0..coarse_steps`: at
/// step `k` it reads from fine index `k·F − offset(k)·F`. Also returns the
/// realized offsets in fine steps.
pub fn apply_error_profile(
    sensor2: &FineMotions,
    profile: &ErrorProfile,
    coarse_steps: usize,
    fine_factor: usize,
) -> Result<(Vec<RigidMotion>, Vec<i64>)> {
    profile.validate(fine_factor)?;
    let f = fine_factor as i64;
    let mut out = Vec::with_capacity(coarse_steps * fine_factor);
    let mut offsets = Vec::with_capacity(coarse_steps);
    for k in 0..coarse_steps {
        let shift = profile.fine_offset_at(k, fine_factor);
        out.extend_from_slice(sensor2.range(k as i64 * f - shift, fine_factor)?);
        offsets.push(shift);
    }
    Ok((out, offsets))
}

/// Composes each run of `fine_factor` consecutive fine motions into one
/// coarse motion.
pub fn batch_to_coarse(fine: &[RigidMotion], fine_factor: usize) -> Result<Vec<RigidMotion>> {
    if fine_factor == 0 || !fine.len().is_multiple_of(fine_factor) {
        return Err(SyncError::Argument(format!(
            "{} fine motions do not split into batches of {fine_factor}",
            fine.len()
        )));
    }
    Ok(fine.chunks(fine_factor).map(chain).collect())
}

/// Target position measurements of both sensors, stamped with the intended
/// coarse step. Sensor 2 actually acquires at `k − offset(k)`.
pub fn simulate_measurements(
    paths: &FinePaths,
    fine_offsets: &[i64],
    measurement_std: f64,
    seed: u64,
) -> Result<[Vec<StampedMeasurement>; 2]> {
    let noise = normal(measurement_std)?;
    let mut rng = stream_rng(seed, MEASUREMENT_STREAM);
    let f = paths.fine_factor as i64;
    let mut s1 = Vec::with_capacity(fine_offsets.len());
    let mut s2 = Vec::with_capacity(fine_offsets.len());
    for (k, &shift) in fine_offsets.iter().enumerate() {
        for (sensor, index, out) in [
            (SensorId::Reference, k as i64 * f, &mut s1),
            (SensorId::Secondary, k as i64 * f - shift, &mut s2),
        ] {
            let p = paths.target_at(index)?;
            let (ex, ey) = match &noise {
                Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                None => (0.0, 0.0),
            };
            out.push(StampedMeasurement {
                sensor,
                timestamp: k as f64,
                position: [p[0] + ex, p[1] + ey],
                noise_std: measurement_std,
            });
        }
    }
    Ok([s1, s2])
}

/// One complete simulated scenario at the coarse rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub config: SimConfig,
    pub profile: ErrorProfile,
    pub mount: RigidMotion,
    pub motions: [Vec<RigidMotion>; 2],
    /// Realized offset per coarse step, in coarse steps.
    pub truth_offset: Vec<f64>,
    pub measurements: [Vec<StampedMeasurement>; 2],
    /// True target position at each coarse step.
    pub target_truth: Vec<[f64; 2]>,
}

impl SimRun {
    /// Rotation magnitudes of sensor `0` or `1`.
    pub fn magnitudes(&self, sensor: usize) -> Vec<f64> {
        magnitudes(&self.motions[sensor])
    }
}

pub fn magnitudes(motions: &[RigidMotion]) -> Vec<f64> {
    motions
        .iter()
        .map(|m| m.rotation_magnitude().value())
        .collect()
}

/// Runs the whole pipeline for one seed.
pub fn simulate(cfg: &SimConfig, profile: &ErrorProfile) -> Result<SimRun> {
    cfg.validate()?;
    profile.validate(cfg.fine_factor)?;
    let margin = profile.max_abs_offset(cfg.coarse_steps).ceil() as usize + 1;
    let paths = generate_paths(cfg, margin)?;
    let motions = derive_noisy_motions(&paths, cfg.noise_level, cfg.rng_seed)?;
    let fine1 = motions.sensor1.range(0, cfg.fine_steps())?;
    let (fine2, fine_offsets) =
        apply_error_profile(&motions.sensor2, profile, cfg.coarse_steps, cfg.fine_factor)?;
    let coarse1 = batch_to_coarse(fine1, cfg.fine_factor)?;
    let coarse2 = batch_to_coarse(&fine2, cfg.fine_factor)?;
    let measurements =
        simulate_measurements(&paths, &fine_offsets, cfg.measurement_std, cfg.rng_seed)?;
    let f = cfg.fine_factor as i64;
    let target_truth = (0..cfg.coarse_steps)
        .map(|k| paths.target_at(k as i64 * f))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimRun {
        config: *cfg,
        profile: profile.clone(),
        mount: motions.mount,
        motions: [coarse1, coarse2],
        truth_offset: fine_offsets
            .iter()
            .map(|&o| o as f64 / cfg.fine_factor as f64)
            .collect(),
        measurements,
        target_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet(coarse_steps: usize, fine_factor: usize) -> SimConfig {
        SimConfig {
            coarse_steps,
            fine_factor,
            noise_level: 0.0,
            measurement_std: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn lissajous_landmarks() {
        let (x, y, _) = lissajous(0.0, 30.0, 2.0, 3.0);
        assert_eq!((x, y), (0.0, 0.0));
        let (x, _, _) = lissajous(PI / 4.0, 30.0, 2.0, 3.0);
        assert_abs_diff_eq!(x, 30.0, epsilon = 1e-12);
    }

    #[test]
    fn heading_is_tangent() {
        let h = 1e-6;
        for &t in &[0.3, 1.1, 2.0, 4.4] {
            let (x0, y0, _) = lissajous(t - h, 30.0, 2.0, 3.0);
            let (x1, y1, _) = lissajous(t + h, 30.0, 2.0, 3.0);
            let (_, _, yaw) = lissajous(t, 30.0, 2.0, 3.0);
            assert_abs_diff_eq!((y1 - y0).atan2(x1 - x0), yaw, epsilon = 1e-6);
        }
    }

    #[test]
    fn straight_path_and_target_kinematics() {
        let cfg = SimConfig {
            path: PathSpec::Straight { speed: 0.4 },
            ..quiet(20, 10)
        };
        let paths = generate_paths(&cfg, 0).unwrap();
        let p = paths.ego_at(100).unwrap();
        assert_abs_diff_eq!(p.translation().x, 4.0, epsilon = 1e-12);
        assert_eq!(p.translation().y, 0.0);
        let t = paths.target_at(100).unwrap();
        assert_abs_diff_eq!(t[0], -40.0 + 4.0, epsilon = 1e-12);
        assert_eq!(t[1], 0.0);
        let motions = derive_noisy_motions(&paths, 0.0, 0).unwrap();
        assert!(motions.sensor1.motions.iter().all(|m| m.rotation_magnitude().value() == 0.0));
    }

    #[test]
    fn planar_path_rotates_about_vertical() {
        let paths = generate_paths(&quiet(20, 10), 0).unwrap();
        for p in &paths.ego {
            let q = p.rotation();
            assert_abs_diff_eq!(q.i, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(q.j, 0.0, epsilon = 1e-15);
            assert_eq!(p.translation().z, 0.0);
        }
    }

    #[test]
    fn rotation_noise_scales_with_mean_motion() {
        // Mean fine rotation 0.5 rad at 10 % noise gives 0.05 rad. A straight
        // path with constant yaw rate has a known mean rotation.
        let cfg = quiet(10, 10);
        let mut paths = generate_paths(&cfg, 0).unwrap();
        for (i, p) in paths.ego.iter_mut().enumerate() {
            *p = RigidMotion::planar(i as f64, 0.0, 0.5 * i as f64);
        }
        let m = derive_noisy_motions(&paths, 0.1, 3).unwrap();
        assert_abs_diff_eq!(m.rotation_noise_std, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.translation_noise_std, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = SimConfig {
            coarse_steps: 30,
            fine_factor: 20,
            rng_seed: 42,
            ..Default::default()
        };
        let profile = ErrorProfile::default_steps(30);
        assert_eq!(simulate(&cfg, &profile).unwrap(), simulate(&cfg, &profile).unwrap());
        let other = SimConfig { rng_seed: 43, ..cfg };
        assert_ne!(
            simulate(&cfg, &profile).unwrap().motions,
            simulate(&other, &profile).unwrap().motions
        );
    }

    #[test]
    fn noise_free_magnitudes_agree() {
        let run = simulate(&quiet(200, 100), &ErrorProfile::None).unwrap();
        assert_eq!(run.motions[0].len(), 200);
        for (a, b) in run.magnitudes(0).iter().zip(run.magnitudes(1)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(run.truth_offset.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn profile_none_leaves_stream_untouched() {
        let cfg = quiet(10, 10);
        let paths = generate_paths(&cfg, 1).unwrap();
        let m = derive_noisy_motions(&paths, 0.5, 1).unwrap();
        let (out, offsets) = apply_error_profile(&m.sensor2, &ErrorProfile::None, 10, 10).unwrap();
        assert_eq!(out, m.sensor2.range(0, 100).unwrap());
        assert!(offsets.iter().all(|&o| o == 0));
    }

    #[test]
    fn constant_offset_reads_behind() {
        let cfg = quiet(10, 100);
        let paths = generate_paths(&cfg, 1).unwrap();
        let m = derive_noisy_motions(&paths, 0.5, 1).unwrap();
        let (out, offsets) =
            apply_error_profile(&m.sensor2, &ErrorProfile::constant(0.15), 10, 100).unwrap();
        assert!(offsets.iter().all(|&o| o == 15));
        assert_eq!(out, m.sensor2.range(-15, 1000).unwrap());
    }

    #[test]
    fn offsets_beyond_the_margin_are_rejected() {
        let cfg = quiet(10, 10);
        let paths = generate_paths(&cfg, 1).unwrap();
        let m = derive_noisy_motions(&paths, 0.0, 1).unwrap();
        let err = apply_error_profile(&m.sensor2, &ErrorProfile::constant(3.0), 10, 10);
        assert!(matches!(err, Err(SyncError::Simulation(_))));
    }

    #[test]
    fn off_grid_step_offsets_are_rejected() {
        assert!(ErrorProfile::constant(0.15).validate(10).is_err());
        assert!(ErrorProfile::constant(0.15).validate(100).is_ok());
    }

    #[test]
    fn ramp_interpolates() {
        let ramp = ErrorProfile::Ramp {
            start_step: 50,
            end_step: 150,
            final_offset: 1.0,
        };
        assert_eq!(ramp.offset_at(100), 0.5);
        assert_eq!(ramp.offset_at(10), 0.0);
        assert_eq!(ramp.offset_at(190), 1.0);
        let run = simulate(&quiet(200, 100), &ramp).unwrap();
        assert_eq!(run.truth_offset[100], 0.5);
        for &o in &run.truth_offset {
            assert!((o * 100.0 - (o * 100.0).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn default_steps_jump_by_half_and_one() {
        let p = ErrorProfile::default_steps(200);
        assert_eq!(p.change_points(200), vec![40, 80, 120, 160]);
        let jumps: Vec<f64> = [40, 80, 120, 160]
            .iter()
            .map(|&k| p.offset_at(k) - p.offset_at(k - 1))
            .collect();
        assert_eq!(jumps, vec![0.5, 1.0, -0.5, -1.0]);
    }

    #[test]
    fn batching() {
        let m: Vec<RigidMotion> = (0..6)
            .map(|i| RigidMotion::planar(i as f64, 0.0, 0.1 * i as f64))
            .collect();
        assert_eq!(batch_to_coarse(&m, 1).unwrap(), m);
        assert!(batch_to_coarse(&m, 4).is_err());
        let pairs = batch_to_coarse(&m, 2).unwrap();
        assert_eq!(pairs[1], m[2].compose(&m[3]));
        let ids = vec![RigidMotion::identity(); 100];
        assert!(batch_to_coarse(&ids, 100).unwrap()[0].is_identity(1e-15));
        let run = simulate(&quiet(200, 100), &ErrorProfile::None).unwrap();
        assert_eq!(run.config.fine_steps(), 20_000);
        assert_eq!(run.motions[1].len(), 200);
    }

    #[test]
    fn fine_factor_one_keeps_row_counts() {
        let run = simulate(&quiet(50, 1), &ErrorProfile::None).unwrap();
        assert_eq!(run.motions[0].len(), 50);
        assert_eq!(run.measurements[1].len(), 50);
        assert_eq!(run.target_truth.len(), 50);
    }

    #[test]
    fn measurements_without_noise() {
        let run = simulate(&quiet(50, 100), &ErrorProfile::None).unwrap();
        for (m, t) in run.measurements[1].iter().zip(&run.target_truth) {
            assert_eq!(m.position, *t);
        }
        let dt = 0.15;
        let run = simulate(&quiet(50, 100), &ErrorProfile::constant(dt)).unwrap();
        for (m, t) in run.measurements[1].iter().zip(&run.target_truth) {
            assert_abs_diff_eq!(m.position[0] - t[0], -0.4 * dt, epsilon = 1e-12);
            assert_eq!(m.position[1], t[1]);
        }
        for (m, t) in run.measurements[0].iter().zip(&run.target_truth) {
            assert_eq!(m.position, *t);
        }
    }

    #[test]
    fn measurement_noise_level() {
        let cfg = SimConfig {
            measurement_std: 0.05,
            ..quiet(5_000, 1)
        };
        let run = simulate(&cfg, &ErrorProfile::None).unwrap();
        let residuals: Vec<f64> = run.measurements[0]
            .iter()
            .zip(&run.target_truth)
            .flat_map(|(m, t)| [m.position[0] - t[0], m.position[1] - t[1]])
            .collect();
        assert_eq!(residuals.len(), 10_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.05).abs() < 0.05 * 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn mount_does_not_change_magnitudes() {
        let cfg = SimConfig {
            rng_seed: 9,
            ..quiet(40, 10)
        };
        let run = simulate(&cfg, &ErrorProfile::None).unwrap();
        assert!(run.mount.rotation_magnitude().value() > 0.0);
        for (a, b) in run.motions[0].iter().zip(&run.motions[1]) {
            let residual = crate::geometry::cycle_residual(&run.mount.inverse(), a, b);
            assert!(residual.is_identity(1e-9));
        }
    }
}
