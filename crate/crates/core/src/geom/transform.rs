use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use super::rotation::{rot_exp, rot_log, Rotation};
use super::spatial::{Frame, Twist, Wrench};
use super::{skew, vee, GeomTolerances};
use crate::Real;

/// Rigid transform `T = (R, p)`: the configuration of one frame in another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform<T: Real> {
    pub rotation: Rotation<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Transform<T> {
    pub fn identity() -> Self {
        Transform { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation<T>, translation: Vector3<T>) -> Self {
        Transform { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Transform { rotation: Rotation::identity(), translation }
    }

    pub fn from_rotation(rotation: Rotation<T>) -> Self {
        Transform { rotation, translation: Vector3::zeros() }
    }

    /// Reads a homogeneous matrix, re-orthonormalizing its rotation block.
    pub fn from_homogeneous(m: &Matrix4<T>) -> Self {
        let r: Matrix3<T> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Transform {
            rotation: Rotation::project(&r),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Transform { rotation: rt, translation: -(rt.matrix() * self.translation) }
    }

    pub fn transform_point(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.matrix() * x + self.translation
    }

    /// `[Ad_T] = [[R, 0], [[p]R, R]]`.
    pub fn adjoint(&self) -> Matrix6<T> {
        let r = self.rotation.matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&self.translation) * r));
        ad
    }

    /// Maps a twist from the child frame to the parent frame, `[Ad_T]·V`,
    /// without frame-tag checks.
    pub fn act_twist_raw(&self, angular: &Vector3<T>, linear: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
        let r = self.rotation.matrix();
        let w = r * angular;
        (w, self.translation.cross(&w) + r * linear)
    }

    /// For `T = T_ij`, returns the wrench `F_i` (acting at frame `i`)
    /// expressed at frame `j`: `[Ad_T]ᵀ·F_i`.
    pub fn wrench_to_child(&self, moment: &Vector3<T>, force: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
        let rt = self.rotation.matrix().transpose();
        let f = rt * force;
        let m = rt * (moment + force.cross(&self.translation));
        (m, f)
    }

    /// Same as [`Transform::wrench_to_child`] on a tagged wrench.
    pub fn transform_wrench_to_child(&self, w: &Wrench<T>, child: Frame) -> Wrench<T> {
        let (m, f) = self.wrench_to_child(&w.moment, &w.force);
        Wrench { moment: m, force: f, frame: child }
    }

    pub fn cast<U: Real>(&self) -> Transform<U> {
        Transform {
            rotation: self.rotation.cast(),
            translation: self.translation.map(|x| U::lit(x.as_f64())),
        }
    }
}

impl<T: Real> Default for Transform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Transform<T> {
    type Output = Transform<T>;
    fn mul(self, rhs: Self) -> Self {
        Mul::mul(&self, &rhs)
    }
}

impl<T: Real> Mul<&Transform<T>> for &Transform<T> {
    type Output = Transform<T>;
    fn mul(self, rhs: &Transform<T>) -> Transform<T> {
        Transform {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation.matrix() * rhs.translation + self.translation,
        }
    }
}

fn left_jacobian_coeffs<T: Real>(theta: T) -> (T, T) {
    let tol = GeomTolerances::for_scalar::<T>();
    let t2 = theta * theta;
    if theta < T::lit(tol.small_angle.sqrt()) {
        (
            T::lit(0.5) - t2 / T::lit(24.0),
            T::one() / T::lit(6.0) - t2 / T::lit(120.0),
        )
    } else {
        (
            (T::one() - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    }
}

/// Exponential map of se(3); `xi = (ω, v)`.
pub fn se3_exp<T: Real>(xi: &Vector6<T>) -> Transform<T> {
    let w: Vector3<T> = xi.fixed_rows::<3>(0).into_owned();
    let v: Vector3<T> = xi.fixed_rows::<3>(3).into_owned();
    let (a, b) = left_jacobian_coeffs(w.norm());
    let k = skew(&w);
    let jac = Matrix3::identity() + k * a + k * k * b;
    Transform { rotation: rot_exp(&w), translation: jac * v }
}

/// Logarithm of SE(3) as a 6-vector `(ω, v)`.
pub fn se3_log<T: Real>(t: &Transform<T>) -> Vector6<T> {
    let w = rot_log(&t.rotation).vector;
    let theta = w.norm();
    let k = skew(&w);
    let tol = GeomTolerances::for_scalar::<T>();
    let c = if theta < T::lit(tol.small_angle.sqrt()) {
        T::one() / T::lit(12.0) + theta * theta / T::lit(720.0)
    } else {
        let half = theta * T::lit(0.5);
        (T::one() - half * half.cos() / half.sin()) / (theta * theta)
    };
    let jac_inv = Matrix3::identity() - k * T::lit(0.5) + k * k * c;
    let v = jac_inv * t.translation;
    Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
}

/// Body twist from a pose and its elementwise time derivative,
/// `[V] = T⁻¹·Ṫ`. The rotational block is antisymmetrized before `ω` is read.
pub fn twist_from_pose_derivative<T: Real>(t: &Transform<T>, t_dot: &Matrix4<T>) -> Twist<T> {
    let m = t.inverse().to_homogeneous() * t_dot;
    let block: Matrix3<T> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let linear: Vector3<T> = m.fixed_view::<3, 1>(0, 3).into_owned();
    Twist { angular: vee(&block), linear, frame: Frame::UNSPECIFIED }
}
