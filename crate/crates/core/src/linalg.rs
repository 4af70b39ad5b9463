//! Least squares by orthogonal decomposition with rank diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::Real;

/// Relative singular-value threshold below which a direction counts as
/// unobservable.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Solution of `min ‖A·x − b‖₂`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T: Real> {
    pub x: DVector<T>,
    /// Singular values of `A`, descending.
    pub singular_values: Vec<T>,
    /// Right singular vectors whose singular value falls below the threshold.
    pub null_space: Vec<DVector<T>>,
    pub residual_norm: T,
}

impl<T: Real> LeastSquares<T> {
    pub fn is_full_rank(&self) -> bool {
        self.null_space.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len() - self.null_space.len()
    }
}

/// Solves `min ‖A·x − b‖₂` via Householder QR followed by an SVD of the
/// small triangular factor. Rank-deficient directions are reported in
/// `null_space` and excluded from `x` (minimum-norm solution).
pub fn least_squares<T: Real>(a: &DMatrix<T>, b: &DVector<T>, rank_tol: f64) -> LeastSquares<T> {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "row count mismatch");

    // Reduce to an n×n problem when the system is tall.
    let (r, qtb) = if m > n {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, n).into_owned())
    } else {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, m).copy_from(b);
        (padded, rhs)
    };

    let svd = r.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let sigma: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma_max = sigma.first().copied().unwrap_or_else(T::zero);
    let cutoff = sigma_max * T::lit(rank_tol);

    let mut x = DVector::zeros(n);
    let mut null_space = Vec::new();
    for &i in &order {
        let s = svd.singular_values[i];
        let v = v_t.row(i).transpose();
        if s > cutoff && s > T::zero() {
            let coeff = u.column(i).dot(&qtb) / s;
            x += v * coeff;
        } else {
            null_space.push(v);
        }
    }
    // Full rank and triangular: back substitution is more accurate than
    // recombining singular vectors.
    if null_space.is_empty() && m > n {
        if let Some(sol) = r.solve_upper_triangular(&qtb) {
            if sol.iter().all(|v| v.is_finite()) {
                x = sol;
            }
        }
    }
    let residual_norm = (a * &x - b).norm();
    LeastSquares { x, singular_values: sigma, null_space, residual_norm }
}
