use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::{skew, vee, GeomError, GeomTolerances};
use crate::Real;

/// Element of SO(3) stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T: Real> {
    m: Matrix3<T>,
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Rotation { m: Matrix3::identity() }
    }

    /// Wraps a matrix the caller guarantees is a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Rotation { m }
    }

    /// Validates `m` against the orthonormality and determinant tolerances.
    pub fn try_from_matrix(m: Matrix3<T>, tol: &GeomTolerances) -> Result<Self, GeomError> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeomError::NonFinite { what: "rotation matrix" });
        }
        let deviation = (m * m.transpose() - Matrix3::identity()).abs().max().as_f64();
        if deviation > tol.orthonormality {
            return Err(GeomError::NotOrthonormal { deviation });
        }
        let det = m.determinant().as_f64();
        if (det - 1.0).abs() > tol.determinant {
            return Err(GeomError::BadDeterminant { det });
        }
        Ok(Rotation { m })
    }

    /// Nearest rotation to `m` in the Frobenius norm (SVD projection).
    ///
    /// Used whenever a rotation is built from raw, possibly drifted data.
    pub fn project(m: &Matrix3<T>) -> Self {
        let svd = nalgebra::DMatrix::from_column_slice(3, 3, m.as_slice()).svd(true, true);
        let u = Matrix3::from_column_slice(svd.u.expect("svd u").as_slice());
        let v_t = Matrix3::from_column_slice(svd.v_t.expect("svd v_t").as_slice());
        let d = (u * v_t).determinant();
        let s = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), d.signum()));
        Rotation { m: u * s * v_t }
    }

    /// Rotation by `angle` radians about the unit `axis`.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        rot_exp(&(axis.normalize() * angle))
    }

    pub fn rot_x(angle: T) -> Self {
        rot_exp(&Vector3::new(angle, T::zero(), T::zero()))
    }

    pub fn rot_y(angle: T) -> Self {
        rot_exp(&Vector3::new(T::zero(), angle, T::zero()))
    }

    pub fn rot_z(angle: T) -> Self {
        rot_exp(&Vector3::new(T::zero(), T::zero(), angle))
    }

    /// Builds a rotation from a (not necessarily unit) quaternion `w, x, y, z`.
    pub fn from_quaternion(w: T, x: T, y: T, z: T) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Rotation { m: q.to_rotation_matrix().into_inner() }
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [T; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.m));
        let q = q.into_inner();
        let s = if q.w < T::zero() { -T::one() } else { T::one() };
        [q.w * s, q.i * s, q.j * s, q.k * s]
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    pub fn transpose(&self) -> Self {
        Rotation { m: self.m.transpose() }
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn log(&self) -> RotLog<T> {
        rot_log(self)
    }

    pub fn angle(&self) -> T {
        rot_log(self).vector.norm()
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        Rotation { m: self.m.map(|x| U::lit(x.as_f64())) }
    }
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Rotation<T> {
    type Output = Rotation<T>;
    fn mul(self, rhs: Self) -> Self {
        Rotation { m: self.m * rhs.m }
    }
}

impl<T: Real> Mul<&Rotation<T>> for &Rotation<T> {
    type Output = Rotation<T>;
    fn mul(self, rhs: &Rotation<T>) -> Rotation<T> {
        Rotation { m: self.m * rhs.m }
    }
}

impl<T: Real> Mul<Vector3<T>> for Rotation<T> {
    type Output = Vector3<T>;
    fn mul(self, rhs: Vector3<T>) -> Vector3<T> {
        self.m * rhs
    }
}

impl<T: Real> Mul<&Vector3<T>> for &Rotation<T> {
    type Output = Vector3<T>;
    fn mul(self, rhs: &Vector3<T>) -> Vector3<T> {
        self.m * rhs
    }
}

/// Which formula `rot_log` used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBranch {
    /// Series expansion around the identity.
    SmallAngle,
    Regular,
    /// Half-turn: axis taken from the dominant diagonal of `(R + I)/2`.
    NearPi,
}

/// Exponential coordinates `ωβ` of a rotation plus the branch taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotLog<T: Real> {
    pub vector: Vector3<T>,
    pub branch: LogBranch,
}

/// Rodrigues' formula. Below the small-angle tolerance the series
/// `I + [w] + [w]²/2` is used.
pub fn rot_exp<T: Real>(w: &Vector3<T>) -> Rotation<T> {
    let tol = GeomTolerances::for_scalar::<T>();
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(w);
    let k2 = k * k;
    let (a, b) = if theta < T::lit(tol.small_angle) {
        (
            T::one() - theta2 / T::lit(6.0),
            T::lit(0.5) - theta2 / T::lit(24.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    Rotation { m: Matrix3::identity() + k * a + k2 * b }
}

/// Matrix logarithm of a rotation, `|result| ∈ [0, π]`.
pub fn rot_log<T: Real>(r: &Rotation<T>) -> RotLog<T> {
    rot_log_with(r, &GeomTolerances::for_scalar::<T>())
}

pub(crate) fn rot_log_with<T: Real>(r: &Rotation<T>, tol: &GeomTolerances) -> RotLog<T> {
    let m = r.matrix();
    let half = T::lit(0.5);
    let axis_sin = vee(m); // sin(θ)·n
    let cos_theta = (m.trace() - T::one()) * half;
    let sin_theta = axis_sin.norm();
    let theta = sin_theta.atan2(cos_theta);

    if theta < T::lit(tol.small_angle) {
        // θ / sin θ ≈ 1 + θ²/6
        let scale = T::one() + theta * theta / T::lit(6.0);
        return RotLog { vector: axis_sin * scale, branch: LogBranch::SmallAngle };
    }

    if T::pi() - theta < T::lit(tol.log_pi_branch) {
        let axis = axis_from_symmetric_part(m, -T::one());
        let axis = canonical_sign(axis);
        return RotLog { vector: axis * T::pi(), branch: LogBranch::NearPi };
    }

    if theta > T::lit(2.0) {
        // sin θ is small here; the symmetric part carries the axis accurately.
        let mut axis = axis_from_symmetric_part(m, cos_theta);
        if axis.dot(&axis_sin) < T::zero() {
            axis = -axis;
        }
        return RotLog { vector: axis * theta, branch: LogBranch::Regular };
    }

    RotLog { vector: axis_sin * (theta / sin_theta), branch: LogBranch::Regular }
}

// (R + Rᵀ)/2 − cos θ·I = (1 − cos θ)·n·nᵀ
fn axis_from_symmetric_part<T: Real>(m: &Matrix3<T>, cos_theta: T) -> Vector3<T> {
    let half = T::lit(0.5);
    let b = (m + m.transpose()) * half - Matrix3::identity() * cos_theta;
    let mut k = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(k, k)] {
            k = i;
        }
    }
    b.column(k).into_owned().normalize()
}

fn canonical_sign<T: Real>(v: Vector3<T>) -> Vector3<T> {
    let eps = T::lit(1e-12);
    for i in 0..3 {
        if v[i].abs() > eps {
            return if v[i] < T::zero() { -v } else { v };
        }
    }
    v
}

/// Angle in degrees of `log(R_trueᵀ·R_est)`, in `[0, 180]`.
pub fn rotation_error_deg<T: Real>(r_true: &Rotation<T>, r_est: &Rotation<T>) -> T {
    let rel = r_true.transpose() * *r_est;
    rot_log(&rel).vector.norm() * T::lit(180.0) / T::pi()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, max_norm: f64) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() <= 1.0 && v.norm() > 1e-3 {
                return v * max_norm;
            }
        }
    }

    #[test]
    fn exp_of_zero_and_half_turn() {
        assert_eq!(*rot_exp(&Vector3::<f64>::zeros()).matrix(), Matrix3::identity());
        let r = rot_exp(&Vector3::new(0.0, 0.0, PI));
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((r.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn exp_small_angle_series() {
        let w = Vector3::new(1.0, -2.0, 0.5).normalize() * 1e-12;
        let r = rot_exp(&w);
        let first_order = Matrix3::identity() + skew(&w);
        assert!((r.matrix() - first_order).abs().max() < 1e-12);
    }

    #[test]
    fn log_identity_and_quarter_turn() {
        let l = rot_log(&Rotation::<f64>::identity());
        assert_eq!(l.vector, Vector3::zeros());
        assert_eq!(l.branch, LogBranch::SmallAngle);
        let l = rot_log(&Rotation::rot_z(PI / 2.0));
        assert!((l.vector - Vector3::new(0.0, 0.0, PI / 2.0)).norm() < 1e-15);
        assert_eq!(l.branch, LogBranch::Regular);
    }

    #[test]
    fn log_half_turn_takes_pi_branch() {
        let axis = Vector3::new(1.0, 2.0, -2.0).normalize();
        let r = Rotation::from_axis_angle(&axis, PI);
        let l = rot_log(&r);
        assert_eq!(l.branch, LogBranch::NearPi);
        assert!((l.vector.norm() - PI).abs() < 1e-12);
        assert!((rot_exp(&l.vector).matrix() - r.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn log_close_to_pi_stays_accurate() {
        let axis = Vector3::new(0.3, -0.4, 0.5).normalize();
        for gap in [1e-3, 1e-5, 1e-7, 1e-8] {
            let r = Rotation::from_axis_angle(&axis, PI - gap);
            let l = rot_log(&r);
            assert_eq!(l.branch, LogBranch::Regular);
            assert!((rot_exp(&l.vector).matrix() - r.matrix()).abs().max() < 1e-9);
            assert!((l.vector.normalize() - axis).norm() < 1e-9);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let w = random_vec(&mut rng, PI - 0.01);
            let back = rot_log(&rot_exp(&w)).vector;
            assert!((back - w).norm() < 1e-9, "{w} -> {back}");
        }
    }

    #[test]
    fn log_exp_round_trip_on_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let r = rot_exp(&random_vec(&mut rng, PI - 0.01));
            let back = rot_exp(&rot_log(&r).vector);
            assert!((back.matrix() - r.matrix()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn error_deg_definition_and_left_invariance() {
        let i = Rotation::<f64>::identity();
        assert_eq!(rotation_error_deg(&i, &i), 0.0);
        let e = rotation_error_deg(&i, &Rotation::rot_z(2f64.to_radians()));
        assert!((e - 2.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = rot_exp(&random_vec(&mut rng, 3.0));
            let b = rot_exp(&random_vec(&mut rng, 3.0));
            let q = rot_exp(&random_vec(&mut rng, 3.0));
            let lhs = rotation_error_deg(&(q * a), &(q * b));
            let rhs = rotation_error_deg(&a, &b);
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_repairs_drift() {
        let r = Rotation::rot_x(0.3) * Rotation::rot_y(-0.7);
        let drifted = r.matrix() + Matrix3::repeat(1e-6);
        let fixed = Rotation::project(&drifted);
        assert!(Rotation::try_from_matrix(*fixed.matrix(), &GeomTolerances::DEFAULT).is_ok());
        assert!((fixed.matrix() - r.matrix()).abs().max() < 1e-5);
        assert!(matches!(
            Rotation::try_from_matrix(drifted, &GeomTolerances::DEFAULT),
            Err(GeomError::NotOrthonormal { .. })
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Rotation::try_from_matrix(reflection, &GeomTolerances::DEFAULT),
            Err(GeomError::BadDeterminant { .. })
        ));
    }

    #[test]
    fn quaternion_round_trip() {
        let r = Rotation::rot_z(-2.9) * Rotation::rot_x(0.4);
        let q = r.to_quaternion();
        assert!(q[0] >= 0.0);
        let back = Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
        assert!((back.matrix() - r.matrix()).abs().max() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let w = Vector3::new(0.2f32, -0.1, 0.4);
        let back = rot_log(&rot_exp(&w)).vector;
        assert!((back - w).norm() < 1e-5);
    }
}
