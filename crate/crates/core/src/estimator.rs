//! Sliding-window time-offset estimation with a rotational-activity
//! uncertainty measure, and the constant-offset cross-correlation baseline.
//!
//! Sign convention: a positive offset means sensor 2 lags sensor 1, i.e.
//! `r2[k] ≈ r1[k - offset]`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::signal::{
    best_shift, cross_correlation, interpolate, MagnitudeWindow, ShiftScore, SimilarityKernel,
    TauVariant,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Number of coarse samples per window (`w`).
    pub window_size: usize,
    /// Linear up-sampling factor (`b`); offsets resolve to `1/b` steps.
    pub interpolation_factor: usize,
    /// Recency decay base `τ̄` in `(0, 1]`.
    pub temporal_factor: f64,
    /// Lower bound on the total variation, so uncertainty stays finite.
    pub uncertainty_epsilon: f64,
    pub tau_variant: TauVariant,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window_size: 50,
            interpolation_factor: 10,
            temporal_factor: 0.9,
            uncertainty_epsilon: 1e-9,
            tau_variant: TauVariant::Intent,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(SyncError::Config(format!(
                "window_size must be at least 2, got {}",
                self.window_size
            )));
        }
        if self.interpolation_factor < 1 {
            return Err(SyncError::Config("interpolation_factor must be at least 1".into()));
        }
        if !(self.temporal_factor > 0.0 && self.temporal_factor <= 1.0) {
            return Err(SyncError::Config(format!(
                "temporal_factor must lie in (0, 1], got {}",
                self.temporal_factor
            )));
        }
        if !(self.uncertainty_epsilon > 0.0 && self.uncertainty_epsilon.is_finite()) {
            return Err(SyncError::Config("uncertainty_epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Interpolated window length `w · b`.
    pub fn w_check(&self) -> usize {
        self.window_size * self.interpolation_factor
    }

    /// Uncertainty reported for windows without any rotational change.
    pub fn saturated_uncertainty(&self) -> f64 {
        1.0 / self.uncertainty_epsilon
    }
}

/// Offset estimate for one coarse step.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetEstimate {
    pub timestamp: u64,
    /// Estimated lag of sensor 2, in coarse steps.
    pub offset: f64,
    pub uncertainty: f64,
    pub score_curve: Option<Vec<ShiftScore>>,
}

impl OffsetEstimate {
    pub fn is_saturated(&self, cfg: &EstimatorConfig) -> bool {
        self.uncertainty >= cfg.saturated_uncertainty()
    }
}

/// `1 / max(ε, TV(win1) + TV(win2))` where TV is the total variation.
pub fn uncertainty(win1: &MagnitudeWindow, win2: &MagnitudeWindow, eps: f64) -> f64 {
    let activity = win1.total_variation() + win2.total_variation();
    1.0 / activity.max(eps)
}

/// Reusable estimator holding the precomputed recency weights.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    kernel: SimilarityKernel,
    keep_scores: bool,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = SimilarityKernel::new(cfg.w_check(), cfg.temporal_factor, cfg.tau_variant)?;
        Ok(Self {
            cfg,
            kernel,
            keep_scores: false,
        })
    }

    /// Attach the full score curve to every estimate.
    pub fn with_score_curves(mut self, keep: bool) -> Self {
        self.keep_scores = keep;
        self
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn estimate(&self, win1: &MagnitudeWindow, win2: &MagnitudeWindow) -> Result<OffsetEstimate> {
        let w = self.cfg.window_size;
        if win1.len() != w || win2.len() != w {
            return Err(SyncError::Argument(format!(
                "expected two windows of {w} samples, got {} and {}",
                win1.len(),
                win2.len()
            )));
        }
        if win1.anchor() != win2.anchor() {
            return Err(SyncError::Argument(format!(
                "windows anchored at different steps: {} vs {}",
                win1.anchor(),
                win2.anchor()
            )));
        }
        let activity = win1.total_variation() + win2.total_variation();
        let u = 1.0 / activity.max(self.cfg.uncertainty_epsilon);
        let b = self.cfg.interpolation_factor;
        let r1 = interpolate(win1, b)?;
        let r2 = interpolate(win2, b)?;
        let scores = self.kernel.scores(&r1, &r2)?;
        let shift = if activity < self.cfg.uncertainty_epsilon {
            0
        } else {
            best_shift(&scores)
                .map(|s| s.shift)
                .ok_or_else(|| SyncError::Numerical("empty score curve".into()))?
        };
        Ok(OffsetEstimate {
            timestamp: win1.anchor(),
            offset: shift as f64 / b as f64,
            uncertainty: u,
            score_curve: self.keep_scores.then_some(scores),
        })
    }
}

/// One-shot estimate; prefer [`Estimator`] when estimating a whole stream.
pub fn estimate_offset(
    win1: &MagnitudeWindow,
    win2: &MagnitudeWindow,
    cfg: &EstimatorConfig,
) -> Result<OffsetEstimate> {
    Estimator::new(*cfg)?.estimate(win1, win2)
}

/// Estimates for every step from the first full window onward.
pub fn estimate_series(r1: &[f64], r2: &[f64], cfg: &EstimatorConfig) -> Result<Vec<OffsetEstimate>> {
    if r1.len() != r2.len() {
        return Err(SyncError::Argument(format!(
            "series lengths differ: {} vs {}",
            r1.len(),
            r2.len()
        )));
    }
    let est = Estimator::new(*cfg)?;
    let w = cfg.window_size;
    (w.saturating_sub(1)..r1.len())
        .map(|k| {
            let a = MagnitudeWindow::from_series(r1, k, w)?;
            let b = MagnitudeWindow::from_series(r2, k, w)?;
            est.estimate(&a, &b)
        })
        .collect()
}

/// Streaming front end: buffers the last `w` magnitudes of each sensor and
/// emits one estimate per push once both buffers are full.
#[derive(Debug, Clone)]
pub struct OnlineEstimator {
    estimator: Estimator,
    buf1: VecDeque<f64>,
    buf2: VecDeque<f64>,
    last_step: Option<u64>,
}

impl OnlineEstimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        Ok(Self::from_estimator(Estimator::new(cfg)?))
    }

    pub fn from_estimator(estimator: Estimator) -> Self {
        let w = estimator.config().window_size;
        Self {
            estimator,
            buf1: VecDeque::with_capacity(w),
            buf2: VecDeque::with_capacity(w),
            last_step: None,
        }
    }

    pub fn push(&mut self, k: u64, r1: f64, r2: f64) -> Result<Option<OffsetEstimate>> {
        if let Some(prev) = self.last_step {
            if k != prev + 1 {
                return Err(SyncError::Stream(format!(
                    "expected step {} after {prev}, got {k}",
                    prev + 1
                )));
            }
        }
        if !r1.is_finite() || !r2.is_finite() {
            return Err(SyncError::Argument(format!("non-finite magnitude at step {k}")));
        }
        self.last_step = Some(k);
        let w = self.estimator.config().window_size;
        if self.buf1.len() == w {
            self.buf1.pop_front();
            self.buf2.pop_front();
        }
        self.buf1.push_back(r1);
        self.buf2.push_back(r2);
        if self.buf1.len() < w {
            return Ok(None);
        }
        let a = MagnitudeWindow::new(self.buf1.iter().copied().collect(), k)?;
        let b = MagnitudeWindow::new(self.buf2.iter().copied().collect(), k)?;
        self.estimator.estimate(&a, &b).map(Some)
    }

    pub fn reset(&mut self) {
        self.buf1.clear();
        self.buf2.clear();
        self.last_step = None;
    }
}

/// Constant offset from the peak of the periodic cross-correlation of the
/// mean-removed series, mapped into `[-N/2, N/2)`.
pub fn constant_offset_baseline(r1: &[f64], r2: &[f64]) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(SyncError::Argument(format!(
            "series lengths differ: {} vs {}",
            r1.len(),
            r2.len()
        )));
    }
    if r1.is_empty() {
        return Err(SyncError::Argument("empty series".into()));
    }
    let n = r1.len();
    let centered = |x: &[f64]| {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter().map(|v| v - mean).collect::<Vec<_>>()
    };
    let phi = cross_correlation(&centered(r1), &centered(r2))?;
    let signed = |tau: usize| {
        if 2 * tau >= n {
            tau as i64 - n as i64
        } else {
            tau as i64
        }
    };
    let best = (0..n)
        .min_by(|&a, &b| {
            phi[b]
                .total_cmp(&phi[a])
                .then(signed(a).unsigned_abs().cmp(&signed(b).unsigned_abs()))
        })
        .map(signed)
        .unwrap_or(0);
    Ok(best as f64)
}
