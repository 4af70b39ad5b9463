//! Inertia matrix about the center of mass from dynamic data.
//!
//! With `{b}` at the estimated center of mass and axis-aligned with the
//! reference grasp `{s}`, Euler's equation `m_b = 𝓘_b·α_b + [ω_b]·𝓘_b·ω_b`
//! is linear in the six unique entries of `𝓘_b`. Stacking one 3×6 block per
//! timestep gives an overdetermined system solved by least squares. The
//! principal frame `{c}` comes from the eigenvectors of the estimate.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rotation, Wrench};
use crate::kin_est::GraspGraph;
use crate::linalg::{least_squares, RANK_TOLERANCE};
use crate::Real;

/// Relative eigenvalue gap below which principal axes are reported as
/// degenerate.
pub const DEGENERACY_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InertiaError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("insufficient rotational excitation: inertia directions {null_directions:?} are unobservable (singular values {singular_values:?})")]
    InsufficientExcitation { null_directions: Vec<[f64; 6]>, singular_values: Vec<f64> },
    #[error("sample {sample} has a wrench for robot {robot}, which is not in the grasp graph")]
    UnknownRobot { sample: usize, robot: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

/// `(I_xx, I_xy, I_xz, I_yy, I_yz, I_zz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaVector<T: Real>(pub [T; 6]);

impl<T: Real> InertiaVector<T> {
    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        InertiaVector([m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]])
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }
}

/// `A_q + B_q`: the 3×6 block with `(A_q + B_q)·vec(𝓘) = 𝓘·α + [ω]·𝓘·ω`.
pub fn build_regressor_row<T: Real>(alpha: &Vector3<T>, omega: &Vector3<T>) -> SMatrix<T, 3, 6> {
    let (ax, ay, az) = (alpha.x, alpha.y, alpha.z);
    let (wx, wy, wz) = (omega.x, omega.y, omega.z);
    let o = T::zero();
    #[rustfmt::skip]
    let a = SMatrix::<T, 3, 6>::from_row_slice(&[
        ax, ay, az, o,  o,  o,
        o,  ax, o,  ay, az, o,
        o,  o,  ax, o,  ay, az,
    ]);
    #[rustfmt::skip]
    let b = SMatrix::<T, 3, 6>::from_row_slice(&[
        o,        -wx * wz,         wx * wy,  -wy * wz, -wz * wz + wy * wy, wy * wz,
        wx * wz,  wy * wz,          wz * wz - wx * wx, o, -wx * wy,         -wx * wz,
        -wx * wy, -wy * wy + wx * wx, -wy * wz, wx * wy, wx * wz,          o,
    ]);
    a + b
}

/// Net moment about the center of mass in `{b}`:
/// `y = Σ [p_bi]·(R_bi·f_i) + R_bi·m_i` with `p_bi = p̂_si − p̂_sc` and
/// `R_bi = R̂_si`. Gravity acts at the center of mass and drops out.
pub fn moment_rhs<T: Real>(
    wrenches: &BTreeMap<usize, Wrench<T>>,
    graph: &GraspGraph<T>,
    p_sc: &Vector3<T>,
) -> Result<Vector3<T>, usize> {
    let mut y = Vector3::zeros();
    for (&i, w) in wrenches {
        let t = graph.get(i).ok_or(i)?;
        let r = t.rotation.matrix();
        let p_bi = t.translation - p_sc;
        y += p_bi.cross(&(r * w.force)) + r * w.moment;
    }
    Ok(y)
}

/// Angular velocity or acceleration of robot `robot`'s grasp frame,
/// re-expressed in `{b}`. Only the rotation of `T̂_bi` acts on angular
/// components, and `{b}` shares the axes of `{s}`.
pub fn to_body_angular<T: Real>(graph: &GraspGraph<T>, robot: usize, v: &Vector3<T>) -> Option<Vector3<T>> {
    graph.get(robot).map(|t| t.rotation.matrix() * v)
}

/// One timestep: `ω_b`, `α_b` and the applied moment `y` in `{b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaSample<T: Real> {
    pub omega: Vector3<T>,
    pub alpha: Vector3<T>,
    pub moment: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaEstimate<T: Real> {
    /// Symmetric `𝓘̂_b`, before any projection.
    pub inertia: Matrix3<T>,
    pub residual_norm: T,
    /// Singular values of the stacked regressor, descending.
    pub singular_values: Vec<T>,
    pub sample_count: usize,
}

/// Least-squares `𝓘̂_b` from stacked regressor blocks.
pub fn estimate_inertia<T: Real>(samples: &[InertiaSample<T>]) -> Result<InertiaEstimate<T>, InertiaError> {
    if samples.len() < 2 {
        return Err(InertiaError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let q = samples.len();
    let mut x = DMatrix::zeros(3 * q, 6);
    let mut y = DVector::zeros(3 * q);
    for (k, s) in samples.iter().enumerate() {
        if !s.omega.iter().chain(s.alpha.iter()).chain(s.moment.iter()).all(|v| v.is_finite()) {
            return Err(InertiaError::NonFinite);
        }
        x.view_mut((3 * k, 0), (3, 6)).copy_from(&build_regressor_row(&s.alpha, &s.omega));
        y.rows_mut(3 * k, 3).copy_from(&s.moment);
    }
    let sol = least_squares(&x, &y, RANK_TOLERANCE);
    let singular_values: Vec<T> = sol.singular_values.clone();
    if !sol.is_full_rank() {
        let null_directions = sol
            .null_space
            .iter()
            .map(|v| {
                let mut d = [0.0; 6];
                for (k, e) in d.iter_mut().enumerate() {
                    *e = v[k].as_f64();
                }
                d
            })
            .collect();
        return Err(InertiaError::InsufficientExcitation {
            null_directions,
            singular_values: singular_values.iter().map(|s| s.as_f64()).collect(),
        });
    }
    let v = InertiaVector([sol.x[0], sol.x[1], sol.x[2], sol.x[3], sol.x[4], sol.x[5]]);
    Ok(InertiaEstimate { inertia: v.to_matrix(), residual_norm: sol.residual_norm, singular_values, sample_count: q })
}

/// What to do with an estimate that has a negative eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdPolicy {
    #[default]
    Project,
    Discard,
}

impl std::str::FromStr for PsdPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "project" => Ok(Self::Project),
            "discard" => Ok(Self::Discard),
            other => Err(format!("unknown policy {other:?} (expected project or discard)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdProjection<T: Real> {
    pub matrix: Matrix3<T>,
    pub projected: bool,
    /// Magnitude of the most negative eigenvalue, zero if none.
    pub negative_eigenvalue_magnitude: T,
}

/// Clamps negative eigenvalues to zero, keeping eigenvectors. PSD input is
/// returned unchanged.
pub fn psd_project<T: Real>(m: &Matrix3<T>) -> PsdProjection<T> {
    let sym = (m + m.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let most_negative = eig.eigenvalues.iter().copied().fold(T::zero(), |acc, l| if l < acc { l } else { acc });
    if most_negative >= T::zero() {
        return PsdProjection { matrix: *m, projected: false, negative_eigenvalue_magnitude: T::zero() };
    }
    let clamped = eig.eigenvalues.map(|l| if l < T::zero() { T::zero() } else { l });
    let v = eig.eigenvectors;
    let matrix = v * Matrix3::from_diagonal(&clamped) * v.transpose();
    PsdProjection { matrix, projected: true, negative_eigenvalue_magnitude: -most_negative }
}

/// Principal moments (ascending) and the rotation `R_bc` whose columns are
/// the matching eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalInertia<T: Real> {
    pub r_bc: Rotation<T>,
    pub moments: Vector3<T>,
    pub psd_projected: bool,
    pub negative_eigenvalue_magnitude: T,
    /// Two or more moments agree to within [`DEGENERACY_GAP`].
    pub degenerate: bool,
}

/// Eigen-decomposes a symmetric inertia matrix. Columns are signed to keep
/// `R_bc` close to the identity; within a repeated eigenvalue the basis
/// closest to the identity is chosen.
pub fn principal_axes<T: Real>(i_b: &Matrix3<T>) -> PrincipalInertia<T> {
    let sym = (i_b + i_b.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let moments = Vector3::new(eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    let mut r = Matrix3::zeros();
    for (c, &k) in order.iter().enumerate() {
        r.set_column(c, &eig.eigenvectors.column(k));
    }

    // Group near-equal moments.
    let scale = moments.iter().fold(T::zero(), |acc, l| acc.max(l.abs()));
    let tol = scale * T::lit(DEGENERACY_GAP);
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for c in 1..3 {
        if moments[c] - moments[c - 1] <= tol {
            groups.last_mut().unwrap().push(c);
        } else {
            groups.push(vec![c]);
        }
    }
    let degenerate = groups.iter().any(|g| g.len() > 1);

    for g in groups.iter().filter(|g| g.len() > 1) {
        // Orthogonal Procrustes: rotate the eigenspace basis toward the
        // identity columns it replaces.
        let k = g.len();
        let e = DMatrix::from_fn(3, k, |row, col| r[(row, g[col])]);
        let target = DMatrix::from_fn(3, k, |row, col| if row == g[col] { T::one() } else { T::zero() });
        let svd = (e.transpose() * &target).svd(true, true);
        let q = svd.u.expect("svd u") * svd.v_t.expect("svd v_t");
        let rotated = e * q;
        for (col, &c) in g.iter().enumerate() {
            r.set_column(c, &Vector3::new(rotated[(0, col)], rotated[(1, col)], rotated[(2, col)]));
        }
    }
    for c in 0..3 {
        if r[(c, c)] < T::zero() {
            r.set_column(c, &(-r.column(c)));
        }
    }
    if r.determinant() < T::zero() {
        r.set_column(2, &(-r.column(2)));
    }
    PrincipalInertia {
        r_bc: Rotation::from_matrix_unchecked(r),
        moments,
        psd_projected: false,
        negative_eigenvalue_magnitude: T::zero(),
        degenerate,
    }
}

/// Applies `policy` and extracts principal axes. `None` when the policy is
/// [`PsdPolicy::Discard`] and the estimate is not PSD.
pub fn finalize_inertia<T: Real>(i_b: &Matrix3<T>, policy: PsdPolicy) -> Option<PrincipalInertia<T>> {
    let proj = psd_project(i_b);
    if proj.projected && policy == PsdPolicy::Discard {
        return None;
    }
    let mut p = principal_axes(&proj.matrix);
    p.psd_projected = proj.projected;
    p.negative_eigenvalue_magnitude = proj.negative_eigenvalue_magnitude;
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rot_exp, rotation_error_deg, skew, Frame};
    use crate::Transform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euler(i: &Matrix3<f64>, w: &Vector3<f64>, a: &Vector3<f64>) -> Vector3<f64> {
        i * a + skew(w) * i * w
    }

    fn random_psd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let r = rot_exp(&Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        let d = Vector3::new(rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        r.matrix() * Matrix3::from_diagonal(&d) * r.matrix().transpose()
    }

    fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    #[test]
    fn regressor_examples() {
        let m = build_regressor_row(&Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros());
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&m.row(1).iter().copied().collect::<Vec<_>>()[..3], &[0.0, 1.0, 0.0]);
        assert_eq!(&m.row(2).iter().copied().collect::<Vec<_>>()[..3], &[0.0, 0.0, 1.0]);
        assert_eq!(build_regressor_row(&Vector3::<f64>::zeros(), &Vector3::zeros()), SMatrix::<f64, 3, 6>::zeros());
    }

    #[test]
    fn regressor_matches_euler_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let i = random_psd(&mut rng);
            let (w, a) = (v3(&mut rng, 3.0), v3(&mut rng, 10.0));
            let lhs = build_regressor_row(&a, &w) * nalgebra::Vector6::from_row_slice(&InertiaVector::from_matrix(&i).0);
            assert!((lhs - euler(&i, &w, &a)).norm() < 1e-10);
        }
    }

    #[test]
    fn moment_rhs_single_robot() {
        let mut g = GraspGraph::new(1);
        g.set(2, Transform::from_translation(Vector3::new(1.0, 0.0, 0.0)));
        let w = BTreeMap::from([(2, Wrench::new(Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0), Frame::grasp(2)))]);
        assert_eq!(moment_rhs(&w, &g, &Vector3::zeros()).unwrap(), Vector3::new(0.0, 0.0, 1.0));
        let zero = BTreeMap::from([(1, Wrench::zero(Frame::grasp(1)))]);
        assert_eq!(moment_rhs(&zero, &g, &Vector3::new(0.3, 0.0, 0.0)).unwrap(), Vector3::zeros());
        assert_eq!(moment_rhs(&BTreeMap::from([(9, Wrench::zero(Frame::grasp(9)))]), &g, &Vector3::zeros()), Err(9));
    }

    fn forward(i: &Matrix3<f64>, n: usize, seed: u64) -> Vec<InertiaSample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (omega, alpha) = (v3(&mut rng, 2.0), v3(&mut rng, 5.0));
                InertiaSample { omega, alpha, moment: euler(i, &omega, &alpha) }
            })
            .collect()
    }

    #[test]
    fn recovers_diagonal_inertia() {
        let i = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let est = estimate_inertia(&forward(&i, 50, 1)).unwrap();
        assert!((est.inertia - i).abs().max() < 1e-9);
        assert!(est.residual_norm < 1e-9);
    }

    #[test]
    fn single_axis_rotation_is_rank_deficient() {
        let i = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<_> = (0..100)
            .map(|_| {
                let omega = Vector3::new(0.0, 0.0, rng.random_range(-2.0..2.0));
                let alpha = Vector3::new(0.0, 0.0, rng.random_range(-5.0..5.0));
                InertiaSample { omega, alpha, moment: euler(&i, &omega, &alpha) }
            })
            .collect();
        match estimate_inertia(&samples) {
            Err(InertiaError::InsufficientExcitation { null_directions, .. }) => {
                // Only I_xz, I_yz and I_zz are excited by rotation about z.
                assert_eq!(null_directions.len(), 3);
                for d in &null_directions {
                    for k in [2, 4, 5] {
                        assert!(d[k].abs() < 1e-9, "{d:?}");
                    }
                }
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(estimate_inertia(&samples[..1]), Err(InertiaError::TooFewSamples { .. })));
    }

    #[test]
    fn psd_examples() {
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let p = psd_project(&d);
        assert_eq!(p.matrix, d);
        assert!(!p.projected);
        let n = Matrix3::from_diagonal(&Vector3::new(-0.1f64, 2.0, 3.0));
        let p = psd_project(&n);
        assert!(p.projected);
        assert!((p.negative_eigenvalue_magnitude - 0.1).abs() < 1e-15);
        assert!((p.matrix - Matrix3::from_diagonal(&Vector3::new(0.0, 2.0, 3.0))).norm() < 1e-14);
        assert!(finalize_inertia(&n, PsdPolicy::Discard).is_none());
        assert!(finalize_inertia(&n, PsdPolicy::Project).unwrap().psd_projected);
    }

    #[test]
    fn psd_projection_is_nearest() {
        // Brute force over PSD matrices sharing the eigenbasis and over
        // random PSD perturbations of the candidate: none is closer.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let r = rot_exp(&v3(&mut rng, 3.0));
            let l = Vector3::new(rng.random_range(-2.0..-0.01), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            let m = r.matrix() * Matrix3::from_diagonal(&l) * r.matrix().transpose();
            let p = psd_project(&m);
            let best = (p.matrix - m).norm();
            for step in 0..200 {
                let t = step as f64 * 0.01;
                let cand = r.matrix() * Matrix3::from_diagonal(&Vector3::new(t, l.y, l.z)) * r.matrix().transpose();
                assert!((cand - m).norm() >= best - 1e-12);
            }
            for _ in 0..200 {
                let e = random_psd(&mut rng) * 0.05;
                let cand = p.matrix + e;
                assert!((cand - m).norm() >= best - 1e-12);
            }
            assert!((best - (-l.x)).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_axes_examples() {
        let p = principal_axes(&Matrix3::from_diagonal(&Vector3::new(3.0f64, 1.0, 2.0)));
        assert_eq!(p.moments, Vector3::new(1.0, 2.0, 3.0));
        assert!((p.r_bc.matrix().determinant() - 1.0).abs() < 1e-12);
        assert!(p.r_bc.matrix().iter().all(|x| x.abs() < 1e-12 || (x.abs() - 1.0).abs() < 1e-12));

        let p = principal_axes(&Matrix3::from_diagonal(&Vector3::new(1.0f64, 2.0, 3.0)));
        assert!((p.r_bc.matrix() - Matrix3::identity()).norm() < 1e-12);
        assert!(!p.degenerate);

        let rz = Rotation::rot_z(25f64.to_radians());
        let m = rz.matrix() * Matrix3::from_diagonal(&Vector3::new(1.824, 2.438, 4.208)) * rz.matrix().transpose();
        let p = principal_axes(&m);
        assert!((p.moments - Vector3::new(1.824, 2.438, 4.208)).norm() < 1e-9);
        assert!(rotation_error_deg(&rz, &p.r_bc) < 1e-6);
    }

    #[test]
    fn repeated_moments_pick_the_closest_basis() {
        let r = rot_exp(&Vector3::new(0.0, 0.0, 0.3));
        let m = r.matrix() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0)) * r.matrix().transpose();
        let p = principal_axes(&m);
        assert!(p.degenerate);
        // The x-y plane is an eigenspace; identity is the nearest frame.
        assert!((p.r_bc.matrix() - Matrix3::identity()).norm() < 1e-9);
        let p = principal_axes(&(Matrix3::identity() * 2.0));
        assert!((p.r_bc.matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_recovers_any_inertia(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let i = random_psd(&mut rng);
            let est = estimate_inertia(&forward(&i, 40, seed + 1)).unwrap();
            prop_assert!((est.inertia - i).abs().max() < 1e-9);
        }

        #[test]
        fn principal_axes_diagonalize(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let i = random_psd(&mut rng);
            let p = principal_axes(&i);
            let r = p.r_bc.matrix();
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            let d = r.transpose() * i * r;
            prop_assert!((d - Matrix3::from_diagonal(&p.moments)).abs().max() < 1e-9);
            let mut ev: Vec<f64> = i.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 0..3 {
                prop_assert!((ev[k] - p.moments[k]).abs() < 1e-12);
            }
            prop_assert!(p.moments[0] <= p.moments[1] && p.moments[1] <= p.moments[2]);
        }

        #[test]
        fn psd_projection_is_idempotent(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let s = a + a.transpose();
            let once = psd_project(&s).matrix;
            let twice = psd_project(&once);
            prop_assert!((twice.matrix - once).norm() < 1e-12);
            prop_assert!(twice.negative_eigenvalue_magnitude < 1e-12);
        }
    }
}
