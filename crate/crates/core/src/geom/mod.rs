//! Small-dimension Lie-group primitives for SO(3) and SE(3).
//!
//! Rotations are stored as full 3x3 matrices. Twists are `(ω, v)` and
//! wrenches are `(m, f)`, both as 6-vectors with the angular part first.
//! All types are plain values and every operation is a pure function.

mod rotation;
mod spatial;
mod transform;

pub use rotation::{rot_exp, rot_log, rotation_error_deg, LogBranch, RotLog, Rotation};
pub use spatial::{transform_twist, Frame, FramedTransform, Twist, TwistRate, Wrench};
pub use transform::{se3_exp, se3_log, twist_from_pose_derivative, Transform};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::Real;

/// Numerical tolerances for the geometry layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomTolerances {
    /// Maximum entry of `R·Rᵀ − I` accepted for a rotation.
    pub orthonormality: f64,
    /// Maximum `|det(R) − 1|` accepted for a rotation.
    pub determinant: f64,
    /// Distance from π below which `rot_log` takes the half-turn branch.
    pub log_pi_branch: f64,
    /// Angle below which exponential and logarithm use series expansions.
    pub small_angle: f64,
}

impl GeomTolerances {
    pub const DEFAULT: GeomTolerances = GeomTolerances {
        orthonormality: 1e-12,
        determinant: 1e-12,
        log_pi_branch: 1e-9,
        small_angle: 1e-6,
    };

    /// Defaults widened to the precision of `T` (matters for `f32`).
    pub fn for_scalar<T: Real>() -> Self {
        let floor = 64.0 * T::eps().as_f64();
        let d = Self::DEFAULT;
        GeomTolerances {
            orthonormality: d.orthonormality.max(floor),
            determinant: d.determinant.max(floor),
            log_pi_branch: d.log_pi_branch.max(1e3 * floor),
            small_angle: d.small_angle.max(1e3 * floor),
        }
    }
}

impl Default for GeomTolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("matrix has determinant {det}, expected +1")]
    BadDeterminant { det: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("frame mismatch: transform expects a quantity in {expected:?}, got {actual:?}")]
    FrameMismatch { expected: Frame, actual: Frame },
}

/// Skew-symmetric matrix `[v]` with `[v]·w = v × w`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    Vector3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn skew_zero_and_unit_z() {
        assert_eq!(skew(&Vector3::<f64>::zeros()), Matrix3::zeros());
        let s = skew(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(s, Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn skew_matches_cross_product() {
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        let w = Vector3::new(4.0, 5.0, 6.0);
        assert_eq!(s * w, Vector3::new(-3.0, 6.0, -3.0));
        assert_eq!(s, -s.transpose());
    }

    #[test]
    fn vee_inverts_skew() {
        let v = Vector3::new(0.3, -1.2, 2.5);
        assert_eq!(vee(&skew(&v)), v);
    }

    #[test]
    fn f32_tolerances_are_wider() {
        let t = GeomTolerances::for_scalar::<f32>();
        assert!(t.orthonormality > 1e-8);
        assert_eq!(GeomTolerances::for_scalar::<f64>(), GeomTolerances::DEFAULT);
    }

    proptest! {
        #[test]
        fn skew_anticommutes(a in prop::array::uniform3(-10.0f64..10.0), b in prop::array::uniform3(-10.0f64..10.0)) {
            let a = Vector3::from(a);
            let b = Vector3::from(b);
            let lhs = skew(&a) * b;
            let rhs = -(skew(&b) * a);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
