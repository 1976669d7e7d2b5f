use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Proper rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    /// Row-major 3×3.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = Error;

    fn try_from(raw: RawTransform) -> Result<Self> {
        let r = raw.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(rotation, Vector3::from(raw.translation))
    }
}

impl From<RigidTransform> for RawTransform {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        RawTransform {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Validates `RᵀR = I` and `det R = 1`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ORTHO_TOL {
            return Err(Error::InvalidTransform(format!("RᵀR deviates from I by {ortho:e}")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidTransform(format!("det R = {det}")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation given as a scaled axis (axis × angle in radians).
    pub fn from_axis_angle(scaled_axis: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = *Rotation3::new(scaled_axis).matrix();
        Self { rotation, translation }
    }

    /// Re-orthonormalizes a rotation estimate that is close to SO(3).
    pub fn from_rotation_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_matrix_eps(&rotation, 1e-15, 100, Rotation3::identity());
        Self { rotation: *rot.matrix(), translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle of `R` in radians.
    pub fn angle(&self) -> f64 {
        let r = &self.rotation;
        let axis = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        (axis.norm() / 2.0).atan2((r.trace() - 1.0) / 2.0)
    }

    /// Geodesic rotation angle and translation distance between two motions.
    pub fn error_to(&self, other: &RigidTransform) -> (f64, f64) {
        let rel = self.inverse().compose(other);
        (rel.angle(), (self.translation - other.translation).norm())
    }

    /// Screw-free interpolation: slerp on rotation, lerp on translation.
    pub fn interpolate(&self, other: &RigidTransform, s: f64) -> Self {
        let qa = UnitQuaternion::from_matrix(&self.rotation);
        let qb = UnitQuaternion::from_matrix(&other.rotation);
        let q = qa.slerp(&qb, s);
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: self.translation.lerp(&other.translation, s),
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation - Matrix3::identity()).amax() <= tol && self.translation.amax() <= tol
    }
}
