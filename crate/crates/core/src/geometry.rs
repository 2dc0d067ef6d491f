//! Rigid motions and rotation magnitudes.
//!
//! Two rigidly connected sensors observe motions that are conjugate to each
//! other through the fixed mounting transform. Conjugation preserves the
//! rotation angle, so the per-step rotation magnitude is a quantity both
//! sensors share regardless of the (unknown) extrinsic calibration.

use std::f64::consts::PI;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};

/// A 6-DoF rigid transform: unit quaternion rotation plus translation in metres.
///
/// The quaternion is renormalized and canonicalized to a non-negative scalar
/// part on construction, so `q` and `-q` map to the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    /// Builds a motion from raw quaternion components `(w, x, y, z)`.
    ///
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_components(q: [f64; 4], t: [f64; 3]) -> Option<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm == 0.0 || t.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self::new(
            UnitQuaternion::from_quaternion(quat),
            Vector3::from(t),
        ))
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = match Unit::try_new(axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, translation)
    }

    /// Planar pose: rotation `yaw` about +z at position `(x, y, 0)`.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw, Vector3::new(x, y, 0.0))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Quaternion components in `(w, x, y, z)` order.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidMotion {
        let inv = self.rotation.inverse();
        RigidMotion::new(inv, -(inv * self.translation))
    }

    /// Conjugation `self ∘ m ∘ self⁻¹`, re-expressing `m` in another frame.
    pub fn conjugate(&self, m: &RigidMotion) -> RigidMotion {
        self.compose(m).compose(&self.inverse())
    }

    pub fn rotation_magnitude(&self) -> RotationMagnitude {
        rotation_magnitude(self)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle and translation norm both within `tol`.
    pub fn is_identity(&self, tol: f64) -> bool {
        self.rotation_magnitude().value() <= tol && self.translation.norm() <= tol
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    UnitQuaternion::new_normalize(raw)
}

/// Rotation angle in radians, always within `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct RotationMagnitude(f64);

impl RotationMagnitude {
    /// Clamps into `[0, π]`; non-finite input maps to zero.
    pub fn new(value: f64) -> Self {
        if value.is_finite() {
            Self(value.clamp(0.0, PI))
        } else {
            Self(0.0)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<RotationMagnitude> for f64 {
    fn from(r: RotationMagnitude) -> f64 {
        r.0
    }
}

/// Angle of the rotational part; the translation plays no role.
pub fn rotation_magnitude(m: &RigidMotion) -> RotationMagnitude {
    let q = m.rotation.quaternion();
    // atan2 stays accurate near the identity where acos(|w|) loses digits.
    let angle = 2.0 * q.imag().norm().atan2(q.w.abs());
    RotationMagnitude::new(angle)
}

pub fn compose(a: &RigidMotion, b: &RigidMotion) -> RigidMotion {
    a.compose(b)
}

/// `t ∘ va ∘ t⁻¹ ∘ vb⁻¹`, which is the identity when `vb = t ∘ va ∘ t⁻¹`.
pub fn cycle_residual(t: &RigidMotion, va: &RigidMotion, vb: &RigidMotion) -> RigidMotion {
    t.compose(va).compose(&t.inverse()).compose(&vb.inverse())
}

/// Composes a sequence in temporal order: the first element acts first
/// when the motions are relative body-frame increments (`m0 ∘ m1 ∘ …`).
pub fn chain<'a, I>(motions: I) -> RigidMotion
where
    I: IntoIterator<Item = &'a RigidMotion>,
{
    motions
        .into_iter()
        .fold(RigidMotion::identity(), |acc, m| acc.compose(m))
}
