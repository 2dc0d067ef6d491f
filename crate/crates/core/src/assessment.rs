//! Self-assessment verdicts and timestamp-correction strategies.
//!
//! Sensor 1 is the reference clock. Corrections move sensor 2 stamps onto
//! it by subtracting the estimated lag.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::estimator::OffsetEstimate;
use crate::stats::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncState {
    InSync,
    OffsetDetected,
    Unassessable,
}

impl SyncState {
    pub fn as_str(self) -> &'static str {
        match self {
            SyncState::InSync => "in_sync",
            SyncState::OffsetDetected => "offset_detected",
            SyncState::Unassessable => "unassessable",
        }
    }
}

impl std::fmt::Display for SyncState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncVerdict {
    pub timestamp: u64,
    pub state: SyncState,
    pub offset: f64,
    pub uncertainty: f64,
}

pub fn assess(est: &OffsetEstimate, u_max: f64, offset_min: f64) -> SyncVerdict {
    let state = if !(est.uncertainty <= u_max) {
        SyncState::Unassessable
    } else if est.offset.abs() >= offset_min {
        SyncState::OffsetDetected
    } else {
        SyncState::InSync
    };
    SyncVerdict {
        timestamp: est.timestamp,
        state,
        offset: est.offset,
        uncertainty: est.uncertainty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionStrategy {
    /// Apply every estimate.
    AlwaysApply,
    /// Apply confident estimates, discard the rest.
    UncertaintyGate { u_max: f64 },
    /// Apply when confident or when the offset is large; never discard.
    Hybrid { u_max: f64, offset_min: f64 },
}

impl CorrectionStrategy {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && !v.is_nan();
        match *self {
            CorrectionStrategy::AlwaysApply => Ok(()),
            CorrectionStrategy::UncertaintyGate { u_max } if ok(u_max) => Ok(()),
            CorrectionStrategy::Hybrid { u_max, offset_min } if ok(u_max) && ok(offset_min) => Ok(()),
            _ => Err(SyncError::Config(format!(
                "correction thresholds must be positive: {self:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorId {
    /// The reference clock.
    Reference,
    /// The sensor whose stamps get corrected.
    Secondary,
}

impl SensorId {
    pub fn index(self) -> usize {
        match self {
            SensorId::Reference => 1,
            SensorId::Secondary => 2,
        }
    }
}

/// A target position measurement with its (possibly wrong) stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedMeasurement {
    pub sensor: SensorId,
    /// Stamp in coarse steps.
    pub timestamp: f64,
    /// Position in metres.
    pub position: [f64; 2],
    pub noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    Corrected(StampedMeasurement),
    Discarded,
    Unchanged,
}

impl Correction {
    /// The measurement to feed downstream, if any.
    pub fn resolve(self, original: StampedMeasurement) -> Option<StampedMeasurement> {
        match self {
            Correction::Corrected(m) => Some(m),
            Correction::Unchanged => Some(original),
            Correction::Discarded => None,
        }
    }
}

fn shifted(m: &StampedMeasurement, offset: f64) -> Correction {
    if offset == 0.0 {
        Correction::Unchanged
    } else {
        Correction::Corrected(StampedMeasurement {
            timestamp: m.timestamp - offset,
            ..*m
        })
    }
}

/// Applies `strategy` to one measurement given the estimate in force at its stamp.
///
/// The uncertainty gate discards before considering the offset, so a
/// saturated zero-offset estimate still discards.
pub fn correct(m: &StampedMeasurement, est: &OffsetEstimate, strategy: &CorrectionStrategy) -> Correction {
    if m.sensor == SensorId::Reference {
        return Correction::Unchanged;
    }
    match *strategy {
        CorrectionStrategy::AlwaysApply => shifted(m, est.offset),
        CorrectionStrategy::UncertaintyGate { u_max } => {
            if est.uncertainty <= u_max {
                shifted(m, est.offset)
            } else {
                Correction::Discarded
            }
        }
        CorrectionStrategy::Hybrid { u_max, offset_min } => {
            if est.uncertainty <= u_max || est.offset.abs() >= offset_min {
                shifted(m, est.offset)
            } else {
                Correction::Unchanged
            }
        }
    }
}

/// Pairs measurements with the latest estimate anchored at or before their
/// stamp (zero-order hold) and applies a strategy.
///
/// Measurements stamped before the first estimate pass unchanged.
#[derive(Debug, Clone)]
pub struct CorrectionSession {
    strategy: CorrectionStrategy,
    estimates: Vec<OffsetEstimate>,
}

impl CorrectionSession {
    pub fn new(strategy: CorrectionStrategy) -> Result<Self> {
        strategy.validate()?;
        Ok(Self {
            strategy,
            estimates: Vec::new(),
        })
    }

    pub fn strategy(&self) -> &CorrectionStrategy {
        &self.strategy
    }

    pub fn push_estimate(&mut self, est: OffsetEstimate) -> Result<()> {
        if let Some(last) = self.estimates.last() {
            if est.timestamp <= last.timestamp {
                return Err(SyncError::Stream(format!(
                    "estimate for step {} after step {}",
                    est.timestamp, last.timestamp
                )));
            }
        }
        self.estimates.push(est);
        Ok(())
    }

    /// Estimate in force at `timestamp`.
    pub fn estimate_at(&self, timestamp: f64) -> Option<&OffsetEstimate> {
        let idx = self
            .estimates
            .partition_point(|e| e.timestamp as f64 <= timestamp);
        idx.checked_sub(1).map(|i| &self.estimates[i])
    }

    pub fn process(&self, m: &StampedMeasurement) -> Correction {
        match self.estimate_at(m.timestamp) {
            Some(est) => correct(m, est, &self.strategy),
            None => Correction::Unchanged,
        }
    }
}

/// Default uncertainty gate: the 75th percentile of the uncertainties seen
/// during an in-sync warm-up phase (estimates anchored before `warmup_end`).
pub fn warmup_u_max(estimates: &[OffsetEstimate], warmup_end: u64) -> Option<f64> {
    let us: Vec<f64> = estimates
        .iter()
        .filter(|e| e.timestamp < warmup_end)
        .map(|e| e.uncertainty)
        .collect();
    (!us.is_empty()).then(|| quantile(&us, 0.75))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn est(offset: f64, uncertainty: f64) -> OffsetEstimate {
        OffsetEstimate {
            timestamp: 10,
            offset,
            uncertainty,
            score_curve: None,
        }
    }

    fn meas(sensor: SensorId, t: f64) -> StampedMeasurement {
        StampedMeasurement {
            sensor,
            timestamp: t,
            position: [1.5, -2.0],
            noise_std: 0.05,
        }
    }

    const ALL: [CorrectionStrategy; 3] = [
        CorrectionStrategy::AlwaysApply,
        CorrectionStrategy::UncertaintyGate { u_max: 1.0 },
        CorrectionStrategy::Hybrid { u_max: 1.0, offset_min: 0.5 },
    ];

    #[test]
    fn verdicts() {
        assert_eq!(assess(&est(2.0, 10.0), 1.0, 0.5).state, SyncState::Unassessable);
        assert_eq!(assess(&est(0.0, 0.1), 1.0, 0.5).state, SyncState::InSync);
        let v = assess(&est(1.5, 0.1), 1.0, 0.5);
        assert_eq!(v.state, SyncState::OffsetDetected);
        assert_eq!(v.offset, 1.5);
        assert_eq!(assess(&est(0.5, 1.0), 1.0, 0.5).state, SyncState::OffsetDetected);
        assert_eq!(assess(&est(0.0, f64::INFINITY), 1.0, 0.5).state, SyncState::Unassessable);
    }

    #[test]
    fn zero_offset_never_moves_a_stamp() {
        let m = meas(SensorId::Secondary, 12.0);
        for s in ALL {
            assert_eq!(correct(&m, &est(0.0, 0.1), &s), Correction::Unchanged);
        }
    }

    #[test]
    fn gate_discards_uncertain() {
        let m = meas(SensorId::Secondary, 12.0);
        let gate = CorrectionStrategy::UncertaintyGate { u_max: 1.0 };
        assert_eq!(correct(&m, &est(0.3, 2.0), &gate), Correction::Discarded);
        assert_eq!(correct(&m, &est(0.0, 2.0), &gate), Correction::Discarded);
        match correct(&m, &est(0.3, 0.5), &gate) {
            Correction::Corrected(c) => assert!((c.timestamp - 11.7).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hybrid_keeps_small_uncertain_offsets() {
        let m = meas(SensorId::Secondary, 12.0);
        let hybrid = CorrectionStrategy::Hybrid { u_max: 1.0, offset_min: 0.5 };
        assert_eq!(correct(&m, &est(0.3, 2.0), &hybrid), Correction::Unchanged);
        assert!(matches!(correct(&m, &est(0.8, 2.0), &hybrid), Correction::Corrected(_)));
        assert!(matches!(correct(&m, &est(0.3, 0.5), &hybrid), Correction::Corrected(_)));
    }

    #[test]
    fn session_holds_latest_estimate() {
        let mut session = CorrectionSession::new(CorrectionStrategy::AlwaysApply).unwrap();
        let m = meas(SensorId::Secondary, 5.0);
        assert_eq!(session.process(&m), Correction::Unchanged);
        for (k, off) in [(5u64, 1.0), (8, 2.0)] {
            session
                .push_estimate(OffsetEstimate { timestamp: k, offset: off, uncertainty: 0.1, score_curve: None })
                .unwrap();
        }
        assert_eq!(session.estimate_at(7.9).unwrap().timestamp, 5);
        assert_eq!(session.estimate_at(8.0).unwrap().timestamp, 8);
        assert!(session.estimate_at(4.5).is_none());
        let corrected = session.process(&meas(SensorId::Secondary, 9.0)).resolve(meas(SensorId::Secondary, 9.0));
        assert_eq!(corrected.unwrap().timestamp, 7.0);
        assert!(session
            .push_estimate(OffsetEstimate { timestamp: 8, offset: 0.0, uncertainty: 0.1, score_curve: None })
            .is_err());
    }

    #[test]
    fn invalid_thresholds() {
        assert!(CorrectionStrategy::UncertaintyGate { u_max: 0.0 }.validate().is_err());
        assert!(CorrectionStrategy::Hybrid { u_max: 1.0, offset_min: -1.0 }.validate().is_err());
        assert!(CorrectionSession::new(CorrectionStrategy::Hybrid { u_max: f64::NAN, offset_min: 1.0 }).is_err());
    }

    #[test]
    fn warmup_threshold_is_upper_quartile() {
        let ests: Vec<OffsetEstimate> = (0..10u64)
            .map(|k| OffsetEstimate { timestamp: k, offset: 0.0, uncertainty: k as f64, score_curve: None })
            .collect();
        assert_eq!(warmup_u_max(&ests, 5), Some(3.0));
        assert_eq!(warmup_u_max(&ests, 0), None);
    }

    proptest! {
        #[test]
        fn strategy_invariants(
            offset in -3.0f64..3.0,
            u in 0.0f64..5.0,
            t in 0.0f64..100.0,
            idx in 0usize..3,
        ) {
            let s = ALL[idx];
            let e = est(offset, u);
            let reference = meas(SensorId::Reference, t);
            prop_assert_eq!(correct(&reference, &e, &s), Correction::Unchanged);
            let out = correct(&meas(SensorId::Secondary, t), &e, &s);
            if !matches!(s, CorrectionStrategy::UncertaintyGate { .. }) {
                prop_assert_ne!(out, Correction::Discarded);
            }
            if let Correction::Corrected(c) = out {
                prop_assert!((c.timestamp - (t - offset)).abs() < 1e-12);
                prop_assert_eq!(c.position, reference.position);
            }
        }
    }
}
