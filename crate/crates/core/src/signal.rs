//! Sliding windows of rotation magnitudes and the shift-similarity measures
//! computed between two of them.
//!
//! Windows are up-sampled by linear interpolation with factor `b`, then
//! compared at every integer shift of the interpolated grid. The extended
//! similarity is an overlap-normalized, recency-weighted sum of absolute
//! differences; its minimum marks the most plausible shift.

use crate::error::{Result, SyncError};

/// The `w` most recent rotation magnitudes of one sensor, oldest first.
///
/// Index `w - 1` holds the sample taken at `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeWindow {
    samples: Vec<f64>,
    anchor: u64,
}

impl MagnitudeWindow {
    pub fn new(samples: Vec<f64>, anchor: u64) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SyncError::Argument("window contains non-finite samples".into()));
        }
        if (samples.len() as u64) > anchor + 1 {
            return Err(SyncError::Argument(format!(
                "window of {} samples cannot end at step {anchor}",
                samples.len()
            )));
        }
        Ok(Self { samples, anchor })
    }

    /// Window of `w` samples of `series` ending at index `k`.
    pub fn from_series(series: &[f64], k: usize, w: usize) -> Result<Self> {
        if w == 0 || k + 1 < w || k >= series.len() {
            return Err(SyncError::Argument(format!(
                "cannot cut a window of {w} ending at {k} from {} samples",
                series.len()
            )));
        }
        Self::new(series[k + 1 - w..=k].to_vec(), k as u64)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn anchor(&self) -> u64 {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sum of absolute first differences.
    pub fn total_variation(&self) -> f64 {
        self.samples.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
    }
}

/// A window up-sampled by an integer factor, `w · b` samples long.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedWindow {
    samples: Vec<f64>,
    factor: usize,
    source_len: usize,
}

impl InterpolatedWindow {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Score of one candidate shift on the interpolated grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftScore {
    pub shift: i64,
    pub score: f64,
}

/// Orientation of the recency weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    /// Newest sample gets weight one, older samples decay.
    #[default]
    Intent,
    /// `τ̄^(m/w̌)` exactly as the formula is usually printed: the oldest
    /// sample gets weight one.
    Printed,
}

/// Linear up-sampling by `factor`.
///
/// Output index `l` sits at source position `l / factor`; positions past the
/// last source sample are clamped to it, so the trailing `factor - 1` values
/// repeat the newest sample.
pub fn interpolate(window: &MagnitudeWindow, factor: usize) -> Result<InterpolatedWindow> {
    interpolate_samples(window.samples(), factor)
}

pub fn interpolate_samples(samples: &[f64], factor: usize) -> Result<InterpolatedWindow> {
    if factor == 0 {
        return Err(SyncError::Config("interpolation factor must be at least 1".into()));
    }
    let w = samples.len();
    if w < 2 {
        return Err(SyncError::Argument(format!("cannot interpolate a window of {w} samples")));
    }
    let last = samples[w - 1];
    let step = 1.0 / factor as f64;
    let mut out = Vec::with_capacity(w * factor);
    for i in 0..w {
        if i == w - 1 {
            out.extend(std::iter::repeat_n(last, factor));
            break;
        }
        let (a, b) = (samples[i], samples[i + 1]);
        out.push(a);
        for j in 1..factor {
            let frac = j as f64 * step;
            out.push(a + (b - a) * frac);
        }
    }
    Ok(InterpolatedWindow {
        samples: out,
        factor,
        source_len: w,
    })
}

/// Periodic cross-correlation `φ[τ] = Σ f[m]·g[(m+τ) mod N]`.
pub fn cross_correlation(f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if n != g.len() {
        return Err(SyncError::Argument(format!(
            "cross-correlation needs equal lengths, got {} and {}",
            n,
            g.len()
        )));
    }
    if n == 0 {
        return Err(SyncError::Argument("cross-correlation of empty series".into()));
    }
    Ok((0..n)
        .map(|tau| (0..n).map(|m| f[m] * g[(m + tau) % n]).sum())
        .collect())
}

/// Inclusive bounds of the shift interval `[-w̌/2, w̌/2 - 1]`, with `w̌/2`
/// rounded down for odd lengths.
pub fn shift_range(w_check: usize) -> (i64, i64) {
    let half = (w_check / 2) as i64;
    (-half, half - 1)
}

fn check_pair(r1: &InterpolatedWindow, r2: &InterpolatedWindow) -> Result<usize> {
    if r1.len() != r2.len() {
        return Err(SyncError::Argument(format!(
            "interpolated windows differ in length: {} vs {}",
            r1.len(),
            r2.len()
        )));
    }
    Ok(r1.len())
}

fn check_shift(s: i64, w_check: usize) -> Result<()> {
    let (lo, hi) = shift_range(w_check);
    if s < lo || s > hi {
        return Err(SyncError::Argument(format!("shift {s} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Plain sum of absolute differences over the overlap of `r1[m]` and `r2[m + s]`.
pub fn theta(r1: &InterpolatedWindow, r2: &InterpolatedWindow, s: i64) -> Result<f64> {
    let n = check_pair(r1, r2)?;
    check_shift(s, n)?;
    let (a, b) = (r1.samples(), r2.samples());
    let (start, end) = overlap(s, n);
    Ok((start..end)
        .map(|m| (a[m] - b[(m as i64 + s) as usize]).abs())
        .sum())
}

/// Indices `m` of `r1` that overlap `r2[m + s]`, as a half-open range.
fn overlap(s: i64, n: usize) -> (usize, usize) {
    if s >= 0 {
        (0, n - s as usize)
    } else {
        ((-s) as usize, n)
    }
}

/// Reciprocal of the number of overlapping interpolated samples at shift `s`.
pub fn eta(s: i64, w_check: usize) -> Result<f64> {
    let abs = s.unsigned_abs() as usize;
    if abs >= w_check {
        return Err(SyncError::Argument(format!(
            "shift {s} leaves no overlap in a window of {w_check}"
        )));
    }
    Ok(1.0 / (w_check - abs) as f64)
}

fn check_tau_bar(tau_bar: f64) -> Result<()> {
    if !(tau_bar > 0.0 && tau_bar <= 1.0) {
        return Err(SyncError::Config(format!(
            "temporal factor must lie in (0, 1], got {tau_bar}"
        )));
    }
    Ok(())
}

/// Recency weight of interpolated index `m`.
pub fn tau_weight(m: usize, w_check: usize, tau_bar: f64, variant: TauVariant) -> Result<f64> {
    check_tau_bar(tau_bar)?;
    if m >= w_check {
        return Err(SyncError::Argument(format!("index {m} outside window of {w_check}")));
    }
    let exponent = match variant {
        TauVariant::Intent => (w_check - 1 - m) as f64 / w_check as f64,
        TauVariant::Printed => m as f64 / w_check as f64,
    };
    Ok(tau_bar.powf(exponent))
}

/// Weights and normalizers for one interpolated window length, reusable
/// across every estimate of a stream.
#[derive(Debug, Clone)]
pub struct SimilarityKernel {
    weights: Vec<f64>,
    tau_bar: f64,
    variant: TauVariant,
}

impl SimilarityKernel {
    pub fn new(w_check: usize, tau_bar: f64, variant: TauVariant) -> Result<Self> {
        check_tau_bar(tau_bar)?;
        if w_check < 2 {
            return Err(SyncError::Config(format!(
                "interpolated window length must be at least 2, got {w_check}"
            )));
        }
        let weights = (0..w_check)
            .map(|m| tau_weight(m, w_check, tau_bar, variant))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            tau_bar,
            variant,
        })
    }

    pub fn w_check(&self) -> usize {
        self.weights.len()
    }

    pub fn tau_bar(&self) -> f64 {
        self.tau_bar
    }

    pub fn variant(&self) -> TauVariant {
        self.variant
    }

    /// Extended similarity at a single shift.
    pub fn score(&self, r1: &[f64], r2: &[f64], s: i64) -> f64 {
        let n = self.weights.len();
        let (start, end) = overlap(s, n);
        let mut acc = 0.0;
        if s >= 0 {
            let s = s as usize;
            for m in start..end {
                acc += self.weights[m] * (r1[m] - r2[m + s]).abs();
            }
        } else {
            let s = (-s) as usize;
            for m in start..end {
                acc += self.weights[m - s] * (r1[m] - r2[m - s]).abs();
            }
        }
        acc / (end - start) as f64
    }

    /// Scores for every shift in `[-w̌/2, w̌/2 - 1]`, in ascending shift order.
    pub fn scores(&self, r1: &InterpolatedWindow, r2: &InterpolatedWindow) -> Result<Vec<ShiftScore>> {
        let n = check_pair(r1, r2)?;
        if n != self.weights.len() {
            return Err(SyncError::Argument(format!(
                "kernel built for {} samples, windows have {n}",
                self.weights.len()
            )));
        }
        let (lo, hi) = shift_range(n);
        Ok((lo..=hi)
            .map(|s| ShiftScore {
                shift: s,
                score: self.score(r1.samples(), r2.samples(), s),
            })
            .collect())
    }
}

/// Extended similarity for every shift; builds a fresh kernel per call.
pub fn extended_similarity(
    r1: &InterpolatedWindow,
    r2: &InterpolatedWindow,
    tau_bar: f64,
    variant: TauVariant,
) -> Result<Vec<ShiftScore>> {
    let n = check_pair(r1, r2)?;
    SimilarityKernel::new(n, tau_bar, variant)?.scores(r1, r2)
}

/// Shift with the lowest score. Exact ties go to the smallest `|s|`, then to
/// the negative shift.
pub fn best_shift(scores: &[ShiftScore]) -> Option<ShiftScore> {
    scores.iter().copied().min_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.shift.unsigned_abs().cmp(&b.shift.unsigned_abs()))
            .then(a.shift.cmp(&b.shift))
    })
}
