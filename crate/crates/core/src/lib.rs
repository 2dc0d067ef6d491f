//! Online time-offset estimation between two rigidly mounted sensors.
//!
//! Rigidly connected sensors rotate by the same angle every step, whatever
//! their mounting. Comparing sliding windows of per-step rotation
//! magnitudes therefore reveals how far one sensor's timestamps lag the
//! other's, and the amount of rotational change inside the windows tells
//! how much that estimate can be trusted.
//!
//! - [`geometry`]: rigid motions and rotation magnitudes
//! - [`signal`]: windows, interpolation and shift-similarity measures
//! - [`estimator`]: sliding-window offset estimation and uncertainty
//! - [`assessment`]: verdicts and timestamp-correction strategies
//! - [`tracking`]: nearly-constant-velocity Kalman filter
//! - [`simulation`]: synthetic two-sensor scenarios with known offsets
//! - [`experiment`]: Monte Carlo and tracking-impact harness

pub mod assessment;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod signal;
pub mod simulation;
pub mod stats;
pub mod tracking;

pub use assessment::{
    assess, correct, Correction, CorrectionSession, CorrectionStrategy, SensorId,
    StampedMeasurement, SyncState, SyncVerdict,
};
pub use error::{Result, SyncError};
pub use estimator::{
    constant_offset_baseline, estimate_offset, uncertainty, Estimator, EstimatorConfig,
    OffsetEstimate, OnlineEstimator,
};
pub use geometry::{rotation_magnitude, RigidMotion, RotationMagnitude};
pub use signal::{MagnitudeWindow, ShiftScore, TauVariant};
pub use simulation::{ErrorProfile, PathSpec, SimConfig, SimRun, StepChange};
pub use tracking::{GaussianState, MeasurementModel, ProcessModel, TrackPoint};
