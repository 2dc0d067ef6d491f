//! Linear Kalman filter with a planar nearly-constant-velocity model.
//!
//! State ordering is `(x, vx, y, vy)`. Both the transition matrix and the
//! noise gain are block-diagonal per axis.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::assessment::StampedMeasurement;
use crate::error::{Result, SyncError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl GaussianState {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self { mean, cov }
    }

    /// Position taken from a first measurement, velocity zero with a wide prior.
    pub fn from_measurement(z: [f64; 2], position_var: f64, velocity_var: f64) -> Self {
        Self {
            mean: Vector4::new(z[0], 0.0, z[1], 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(
                position_var,
                velocity_var,
                position_var,
                velocity_var,
            )),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.mean[0], self.mean[2]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[1], self.mean[3]]
    }

    pub fn speed(&self) -> f64 {
        self.mean[1].hypot(self.mean[3])
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Smallest eigenvalue of the (symmetrized) covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).abs().max()
    }
}

/// White-acceleration process noise with per-axis standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel {
    pub accel_std: [f64; 2],
}

impl ProcessModel {
    pub fn new(accel_std: [f64; 2]) -> Result<Self> {
        if accel_std.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SyncError::Config(format!(
                "acceleration std must be non-negative, got {accel_std:?}"
            )));
        }
        Ok(Self { accel_std })
    }

    /// Acceleration std giving a one-step position std of `position_std` over
    /// `step` seconds: `σ_a · step² / 2 = position_std`.
    pub fn from_position_std(position_std: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(SyncError::Config(format!("step must be positive, got {step}")));
        }
        let a = 2.0 * position_std / (step * step);
        Self::new([a, a])
    }

    pub fn transition(dt: f64) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 1)] = dt;
        f[(2, 3)] = dt;
        f
    }

    pub fn noise_gain(dt: f64) -> Matrix4x2<f64> {
        let mut g = Matrix4x2::zeros();
        g[(0, 0)] = dt * dt / 2.0;
        g[(1, 0)] = dt;
        g[(2, 1)] = dt * dt / 2.0;
        g[(3, 1)] = dt;
        g
    }

    /// `Γ σ Γᵀ` with `σ = diag(σ_ax², σ_ay²)`.
    pub fn noise(&self, dt: f64) -> Matrix4<f64> {
        let g = Self::noise_gain(dt);
        let sigma = Matrix2::from_diagonal(&Vector2::new(
            self.accel_std[0].powi(2),
            self.accel_std[1].powi(2),
        ));
        g * sigma * g.transpose()
    }
}

/// Position-only measurement `z = H x + e`, `e ~ N(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    pub h: Matrix2x4<f64>,
    pub r: Matrix2<f64>,
}

impl MeasurementModel {
    pub fn position(r: Matrix2<f64>) -> Result<Self> {
        if (r - r.transpose()).abs().max() > 1e-12 || r.cholesky().is_none() {
            return Err(SyncError::Config("measurement covariance must be symmetric positive definite".into()));
        }
        let mut h = Matrix2x4::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        Ok(Self { h, r })
    }

    pub fn isotropic(std: f64) -> Result<Self> {
        Self::position(Matrix2::identity() * (std * std))
    }
}

pub fn predict(state: &GaussianState, dt: f64, pm: &ProcessModel) -> Result<GaussianState> {
    if !(dt >= 0.0) {
        return Err(SyncError::Argument(format!("cannot predict backwards by {dt}")));
    }
    if dt == 0.0 {
        return Ok(*state);
    }
    let f = ProcessModel::transition(dt);
    let cov = f * state.cov * f.transpose() + pm.noise(dt);
    Ok(GaussianState {
        mean: f * state.mean,
        cov: (cov + cov.transpose()) * 0.5,
    })
}

pub fn update(state: &GaussianState, z: [f64; 2], mm: &MeasurementModel) -> Result<GaussianState> {
    let h = mm.h;
    let s = h * state.cov * h.transpose() + mm.r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| SyncError::Numerical("innovation covariance is singular".into()))?;
    let k = state.cov * h.transpose() * s_inv;
    let innovation = Vector2::new(z[0], z[1]) - h * state.mean;
    let mean = state.mean + k * innovation;
    // Joseph form keeps the covariance symmetric positive semidefinite.
    let i_kh = Matrix4::identity() - k * h;
    let cov = i_kh * state.cov * i_kh.transpose() + k * mm.r * k.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
        return Err(SyncError::Numerical("update produced non-finite state".into()));
    }
    Ok(GaussianState { mean, cov })
}

/// Posterior after one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub index: usize,
    /// Stamp in coarse steps.
    pub timestamp: f64,
    pub state: GaussianState,
}

/// Filters a time-ordered measurement list, emitting the posterior after
/// every measurement. `seconds_per_step` converts stamps to seconds; the
/// initial state is taken to sit at the first stamp.
pub fn run_tracker(
    measurements: &[StampedMeasurement],
    init: GaussianState,
    pm: &ProcessModel,
    mm: &MeasurementModel,
    seconds_per_step: f64,
) -> Result<Vec<TrackPoint>> {
    let mut out = Vec::with_capacity(measurements.len());
    let mut state = init;
    let mut last_t: Option<f64> = None;
    for (index, m) in measurements.iter().enumerate() {
        let dt_steps = match last_t {
            Some(prev) if m.timestamp < prev => {
                return Err(SyncError::Stream(format!(
                    "measurement {index} stamped {} precedes {prev}",
                    m.timestamp
                )))
            }
            Some(prev) => m.timestamp - prev,
            None => 0.0,
        };
        state = predict(&state, dt_steps * seconds_per_step, pm)?;
        state = update(&state, m.position, mm)?;
        last_t = Some(m.timestamp);
        out.push(TrackPoint {
            index,
            timestamp: m.timestamp,
            state,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assessment::SensorId;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pm(a: f64) -> ProcessModel {
        ProcessModel::new([a, a]).unwrap()
    }

    fn meas(t: f64, x: f64, y: f64) -> StampedMeasurement {
        StampedMeasurement {
            sensor: SensorId::Reference,
            timestamp: t,
            position: [x, y],
            noise_std: 0.05,
        }
    }

    #[test]
    fn constant_velocity_advance() {
        let cov = Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 3.0, 4.0));
        let s = GaussianState::new(Vector4::new(0.0, 1.0, 0.0, 1.0), cov);
        let p = predict(&s, 1.0, &pm(0.0)).unwrap();
        assert_eq!(p.mean, Vector4::new(1.0, 1.0, 1.0, 1.0));
        let f = ProcessModel::transition(1.0);
        assert_abs_diff_eq!(p.cov, f * cov * f.transpose(), epsilon = 1e-12);
        assert_eq!(predict(&s, 0.0, &pm(3.0)).unwrap(), s);
        assert!(predict(&s, -0.1, &pm(0.0)).is_err());
    }

    #[test]
    fn process_noise_blocks() {
        let s = GaussianState::new(Vector4::zeros(), Matrix4::zeros());
        let p = predict(&s, 2.0, &pm(1.0)).unwrap();
        let mut expected = Matrix4::zeros();
        for (a, b) in [(0, 1), (2, 3)] {
            expected[(a, a)] = 4.0;
            expected[(a, b)] = 4.0;
            expected[(b, a)] = 4.0;
            expected[(b, b)] = 4.0;
        }
        assert_abs_diff_eq!(p.cov, expected, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let cov = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 1.0));
        let s = GaussianState::new(Vector4::zeros(), cov);
        let post = update(&s, [2.0, 0.0], &MeasurementModel::isotropic(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(post.mean[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-12);
        assert!(post.trace() <= s.trace());
    }

    #[test]
    fn measurement_weighting_extremes() {
        let s = GaussianState::new(
            Vector4::new(1.0, 0.5, -1.0, 0.2),
            Matrix4::identity() * 2.0,
        );
        let vague = MeasurementModel::isotropic(1e6).unwrap();
        let post = update(&s, [50.0, 50.0], &vague).unwrap();
        assert_abs_diff_eq!(post.mean, s.mean, epsilon = 1e-9);
        let huge = GaussianState::new(Vector4::zeros(), Matrix4::identity() * 1e8);
        let sharp = MeasurementModel::isotropic(1e-4).unwrap();
        let post = update(&huge, [3.0, -4.0], &sharp).unwrap();
        assert_abs_diff_eq!(post.position()[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(post.position()[1], -4.0, epsilon = 1e-6);
    }

    #[test]
    fn invalid_measurement_covariance() {
        assert!(MeasurementModel::position(Matrix2::new(1.0, 0.0, 0.0, 0.0)).is_err());
        assert!(MeasurementModel::position(Matrix2::new(1.0, 0.5, 0.0, 1.0)).is_err());
        assert!(ProcessModel::new([-1.0, 0.0]).is_err());
    }

    #[test]
    fn singular_innovation_is_reported() {
        let s = GaussianState::new(Vector4::zeros(), Matrix4::zeros());
        let mm = MeasurementModel {
            h: MeasurementModel::isotropic(1.0).unwrap().h,
            r: Matrix2::zeros(),
        };
        assert!(matches!(update(&s, [0.0, 0.0], &mm), Err(SyncError::Numerical(_))));
    }

    #[test]
    fn noise_free_velocity_converges() {
        let ms: Vec<_> = (0..50).map(|k| meas(k as f64, -40.0 + 0.4 * k as f64, 0.0)).collect();
        let init = GaussianState::from_measurement(ms[0].position, 0.05f64.powi(2), 100.0);
        let track = run_tracker(
            &ms,
            init,
            &ProcessModel::from_position_std(0.001, 1.0).unwrap(),
            &MeasurementModel::isotropic(0.05).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(track.len(), 50);
        let last = track.last().unwrap().state;
        assert_abs_diff_eq!(last.velocity()[0], 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(last.velocity()[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn single_and_simultaneous_measurements() {
        let init = GaussianState::from_measurement([0.0, 0.0], 1.0, 1.0);
        let pmod = pm(0.1);
        let mm = MeasurementModel::isotropic(0.5).unwrap();
        let one = run_tracker(&[meas(3.0, 1.0, 1.0)], init, &pmod, &mm, 1.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].state, update(&init, [1.0, 1.0], &mm).unwrap());

        let a = meas(1.0, 0.2, 0.0);
        let b = meas(1.0, 0.4, 0.0);
        let both = run_tracker(&[a, b], init, &pmod, &mm, 1.0).unwrap();
        let expected = update(&update(&init, a.position, &mm).unwrap(), b.position, &mm).unwrap();
        assert_eq!(both[1].state, expected);

        assert!(matches!(
            run_tracker(&[meas(2.0, 0.0, 0.0), meas(1.0, 0.0, 0.0)], init, &pmod, &mm, 1.0),
            Err(SyncError::Stream(_))
        ));
    }

    #[test]
    fn discretized_noise_is_not_additive() {
        // Piecewise-constant acceleration: two unit steps accumulate less
        // position variance than one step of two.
        let f = ProcessModel::transition(1.0);
        let two_steps = f * pm(1.0).noise(1.0) * f.transpose() + pm(1.0).noise(1.0);
        assert_abs_diff_eq!(two_steps[(0, 0)], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(two_steps[(0, 1)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pm(1.0).noise(2.0)[(0, 0)], 4.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn prediction_composes(dt1 in 0.0f64..3.0, dt2 in 0.0f64..3.0, a in 0.0f64..2.0) {
            let s = GaussianState::new(
                Vector4::new(1.0, -0.5, 2.0, 0.3),
                Matrix4::from_diagonal(&Vector4::new(0.3, 0.2, 0.5, 0.1)),
            );
            let sequential = predict(&predict(&s, dt1, &pm(a)).unwrap(), dt2, &pm(a)).unwrap();
            let direct = predict(&s, dt1 + dt2, &pm(a)).unwrap();
            prop_assert!((sequential.mean - direct.mean).abs().max() < 1e-9);
            let f = ProcessModel::transition(dt2) * ProcessModel::transition(dt1);
            prop_assert!((f - ProcessModel::transition(dt1 + dt2)).abs().max() < 1e-12);
            let quiet_seq = predict(&predict(&s, dt1, &pm(0.0)).unwrap(), dt2, &pm(0.0)).unwrap();
            let quiet = predict(&s, dt1 + dt2, &pm(0.0)).unwrap();
            prop_assert!((quiet_seq.cov - quiet.cov).abs().max() < 1e-9);
        }

        #[test]
        fn covariance_stays_psd(
            steps in prop::collection::vec((0.0f64..2.0, -5.0f64..5.0, -5.0f64..5.0), 1..60),
            a in 0.0f64..1.0,
            r in 0.01f64..2.0,
        ) {
            let mm = MeasurementModel::isotropic(r).unwrap();
            let mut s = GaussianState::from_measurement([0.0, 0.0], 1.0, 10.0);
            for (dt, x, y) in steps {
                let predicted = predict(&s, dt, &pm(a)).unwrap();
                s = update(&predicted, [x, y], &mm).unwrap();
                prop_assert!(s.trace() <= predicted.trace() + 1e-12);
                prop_assert!(s.asymmetry() < 1e-9);
                prop_assert!(s.min_eigenvalue() >= -1e-9);
            }
        }
    }
}
