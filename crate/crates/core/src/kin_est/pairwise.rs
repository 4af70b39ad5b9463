use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Vector3};

use super::{to_f64_array, KinError, TwistBatch};
use crate::geom::{skew, Rotation, Transform};
use crate::linalg::{least_squares, RANK_TOLERANCE};
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct RotationFit<T: Real> {
    pub rotation: Rotation<T>,
    /// Singular values of `X = ω_j·ω_iᵀ`, descending.
    pub singular_values: [T; 3],
    /// `‖R·ω_j − ω_i‖_F²` at the solution.
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionFit<T: Real> {
    pub translation: Vector3<T>,
    /// Singular values of the stacked `[R̂·ω_j]` matrix, descending.
    pub singular_values: [T; 3],
    pub residual_norm: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEstimate<T: Real> {
    pub i: usize,
    pub j: usize,
    pub rotation: Rotation<T>,
    pub translation: Vector3<T>,
    pub rotation_cost: T,
    pub position_residual: T,
    pub rotation_singular_values: [T; 3],
    pub position_singular_values: [T; 3],
}

impl<T: Real> PairwiseEstimate<T> {
    /// `T̂_ij`.
    pub fn transform(&self) -> Transform<T> {
        Transform::new(self.rotation, self.translation)
    }
}

fn check_lengths<T: Real>(a: &Matrix3xX<T>, b: &Matrix3xX<T>, needed: usize) -> Result<(), KinError> {
    if a.ncols() != b.ncols() {
        return Err(KinError::LengthMismatch { left: a.ncols(), right: b.ncols() });
    }
    if a.ncols() < needed {
        return Err(KinError::TooFewSamples { needed, got: a.ncols() });
    }
    Ok(())
}

/// Wahba's problem: the rotation minimizing `‖R·ω_j − ω_i‖_F²`.
///
/// With `X = ω_j·ω_iᵀ = U·Σ·Vᵀ` the minimizer is `V·S·Uᵀ`,
/// `S = diag(1, 1, det(V·Uᵀ))`. Fails when `X` is rank deficient; the
/// error names the weakly excited axis in `{j}` coordinates.
pub fn estimate_rotation<T: Real>(omega_i: &Matrix3xX<T>, omega_j: &Matrix3xX<T>) -> Result<RotationFit<T>, KinError> {
    check_lengths(omega_i, omega_j, 3)?;
    let x: Matrix3<T> = omega_j * omega_i.transpose();
    if !x.iter().all(|v| v.is_finite()) {
        return Err(KinError::NonFinite);
    }
    // The dynamic path avoids nalgebra's closed-form 3×3 SVD, which loses
    // precision on nearly repeated singular values.
    let svd = DMatrix::from_column_slice(3, 3, x.as_slice()).svd(true, true);
    let u: Matrix3<T> = Matrix3::from_column_slice(svd.u.expect("svd u").as_slice());
    let v: Matrix3<T> = Matrix3::from_column_slice(svd.v_t.expect("svd v_t").as_slice()).transpose();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let sigma = order.map(|k| svd.singular_values[k]);
    if !(sigma[2] > sigma[0] * T::lit(RANK_TOLERANCE)) {
        let axis = u.column(order[2]).into_owned();
        return Err(KinError::InsufficientExcitation {
            stage: "rotation",
            direction: to_f64_array(&axis),
            singular_values: sigma.iter().map(|s| s.as_f64()).collect(),
        });
    }
    let d = (v * u.transpose()).determinant();
    let mut s = Matrix3::identity();
    s[(2, 2)] = if d < T::zero() { -T::one() } else { T::one() };
    // S flips the axis of the smallest singular value, which must be the
    // one paired with the last column of U and V.
    let mut u_sorted = Matrix3::zeros();
    let mut v_sorted = Matrix3::zeros();
    for (c, &k) in order.iter().enumerate() {
        u_sorted.set_column(c, &u.column(k));
        v_sorted.set_column(c, &v.column(k));
    }
    let r = v_sorted * s * u_sorted.transpose();
    let rotation = Rotation::project(&r);
    let cost = (rotation.matrix() * omega_j - omega_i).norm_squared();
    Ok(RotationFit { rotation, singular_values: sigma, cost })
}

/// Least-squares `p_ij` from `[R̂·ω_j]·p = R̂·v_j − v_i`, solved by
/// orthogonal decomposition.
pub fn estimate_position<T: Real>(
    r_hat: &Rotation<T>,
    omega_j: &Matrix3xX<T>,
    v_i: &Matrix3xX<T>,
    v_j: &Matrix3xX<T>,
) -> Result<PositionFit<T>, KinError> {
    check_lengths(omega_j, v_i, 2)?;
    check_lengths(omega_j, v_j, 2)?;
    let q = omega_j.ncols();
    let r = r_hat.matrix();
    let rw = r * omega_j;
    let rhs = r * v_j - v_i;
    let mut a = DMatrix::zeros(3 * q, 3);
    let mut b = DVector::zeros(3 * q);
    for k in 0..q {
        a.view_mut((3 * k, 0), (3, 3)).copy_from(&skew(&rw.column(k).into_owned()));
        b.rows_mut(3 * k, 3).copy_from(&rhs.column(k));
    }
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(KinError::NonFinite);
    }
    let sol = least_squares(&a, &b, RANK_TOLERANCE);
    let sigma = [sol.singular_values[0], sol.singular_values[1], sol.singular_values[2]];
    if let Some(n) = sol.null_space.first() {
        return Err(KinError::InsufficientExcitation {
            stage: "position",
            direction: [n[0].as_f64(), n[1].as_f64(), n[2].as_f64()],
            singular_values: sigma.iter().map(|s| s.as_f64()).collect(),
        });
    }
    Ok(PositionFit {
        translation: Vector3::new(sol.x[0], sol.x[1], sol.x[2]),
        singular_values: sigma,
        residual_norm: sol.residual_norm,
    })
}

/// `T̂_ij` from synchronized twists of grasps `i` and `j`.
pub fn estimate_pairwise<T: Real>(batch_i: &TwistBatch<T>, batch_j: &TwistBatch<T>) -> Result<PairwiseEstimate<T>, KinError> {
    let rot = estimate_rotation(&batch_i.angular, &batch_j.angular)?;
    let pos = estimate_position(&rot.rotation, &batch_j.angular, &batch_i.linear, &batch_j.linear)?;
    Ok(PairwiseEstimate {
        i: batch_i.robot,
        j: batch_j.robot,
        rotation: rot.rotation,
        translation: pos.translation,
        rotation_cost: rot.cost,
        position_residual: pos.residual_norm,
        rotation_singular_values: rot.singular_values,
        position_singular_values: pos.singular_values,
    })
}
