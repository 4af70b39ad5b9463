use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::transform::Transform;
use super::GeomError;
use crate::Real;

/// Tag naming the frame a spatial quantity is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frame(pub u32);

impl Frame {
    pub const UNSPECIFIED: Frame = Frame(u32::MAX);
    /// The payload's center-of-mass frame `{b}` / `{c}` when tagging sim output.
    pub const COM: Frame = Frame(u32::MAX - 1);

    /// Grasp frame `{i}` of robot `i` (1-based).
    pub const fn grasp(i: usize) -> Frame {
        Frame(i as u32)
    }
}

/// Twist `(ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist<T: Real> {
    pub angular: Vector3<T>,
    pub linear: Vector3<T>,
    pub frame: Frame,
}

/// Time derivative of a twist, `(α, v̇)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistRate<T: Real> {
    pub angular: Vector3<T>,
    pub linear: Vector3<T>,
    pub frame: Frame,
}

/// Wrench `(m, f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench<T: Real> {
    pub moment: Vector3<T>,
    pub force: Vector3<T>,
    pub frame: Frame,
}

macro_rules! six_vector_impls {
    ($ty:ident, $a:ident, $b:ident) => {
        impl<T: Real> $ty<T> {
            pub fn new($a: Vector3<T>, $b: Vector3<T>, frame: Frame) -> Self {
                $ty { $a, $b, frame }
            }

            pub fn zero(frame: Frame) -> Self {
                $ty { $a: Vector3::zeros(), $b: Vector3::zeros(), frame }
            }

            pub fn from_vector(v: &Vector6<T>, frame: Frame) -> Self {
                $ty {
                    $a: v.fixed_rows::<3>(0).into_owned(),
                    $b: v.fixed_rows::<3>(3).into_owned(),
                    frame,
                }
            }

            pub fn to_vector(&self) -> Vector6<T> {
                Vector6::new(self.$a.x, self.$a.y, self.$a.z, self.$b.x, self.$b.y, self.$b.z)
            }

            pub fn is_finite(&self) -> bool {
                self.$a.iter().chain(self.$b.iter()).all(|x| x.is_finite())
            }
        }
    };
}

six_vector_impls!(Twist, angular, linear);
six_vector_impls!(TwistRate, angular, linear);
six_vector_impls!(Wrench, moment, force);

/// A transform `T_ij` that knows it maps quantities from `{j}` into `{i}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedTransform<T: Real> {
    /// `{i}`
    pub parent: Frame,
    /// `{j}`
    pub child: Frame,
    pub transform: Transform<T>,
}

impl<T: Real> FramedTransform<T> {
    pub fn new(parent: Frame, child: Frame, transform: Transform<T>) -> Self {
        FramedTransform { parent, child, transform }
    }

    pub fn inverse(&self) -> Self {
        FramedTransform { parent: self.child, child: self.parent, transform: self.transform.inverse() }
    }
}

/// `V_i = [Ad_{T_ij}]·V_j`. Fails if `v` is not expressed in `{j}`.
pub fn transform_twist<T: Real>(t_ij: &FramedTransform<T>, v_j: &Twist<T>) -> Result<Twist<T>, GeomError> {
    if v_j.frame != t_ij.child {
        return Err(GeomError::FrameMismatch { expected: t_ij.child, actual: v_j.frame });
    }
    let (w, v) = t_ij.transform.act_twist_raw(&v_j.angular, &v_j.linear);
    Ok(Twist { angular: w, linear: v, frame: t_ij.parent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rot_exp, Rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    const I: Frame = Frame::grasp(1);
    const J: Frame = Frame::grasp(2);

    #[test]
    fn identity_leaves_twist_unchanged() {
        let t = FramedTransform::new(I, J, Transform::identity());
        let v = Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 0.0), J);
        let out = transform_twist(&t, &v).unwrap();
        assert_eq!(out.angular, v.angular);
        assert_eq!(out.linear, v.linear);
        assert_eq!(out.frame, I);
    }

    #[test]
    fn rotation_about_z_rotates_axis() {
        let t = FramedTransform::new(I, J, Transform::from_rotation(Rotation::rot_z(FRAC_PI_2)));
        let v = Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), J);
        let out = transform_twist(&t, &v).unwrap();
        assert!((out.angular - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!(out.linear.norm() < 1e-15);
    }

    #[test]
    fn translation_adds_lever_arm_velocity() {
        let t = FramedTransform::new(I, J, Transform::from_translation(Vector3::new(0.0, 0.0, 1.0)));
        let v = Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), J);
        let out = transform_twist(&t, &v).unwrap();
        assert_eq!(out.angular, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(out.linear, Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let t = FramedTransform::new(I, J, Transform::<f64>::identity());
        let v = Twist::zero(I);
        assert_eq!(
            transform_twist(&t, &v),
            Err(GeomError::FrameMismatch { expected: J, actual: I })
        );
    }

    #[test]
    fn agrees_with_explicit_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let w = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let t = FramedTransform::new(I, J, Transform::new(rot_exp(&w), p));
            let v6 = Vector6::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let out = transform_twist(&t, &Twist::from_vector(&v6, J)).unwrap();
            let expected = t.transform.adjoint() * v6;
            assert!((out.to_vector() - expected).norm() < 1e-12);
        }
    }
}
