//! Mass and center of mass from static holds.
//!
//! While the payload is at rest the grasp forces balance gravity,
//! `m·g = −Σ R_{wi}·f_i`, and their moments about `{s}` balance the moment
//! of gravity, `[p_sc](R_{sw}·m·g) = −Σ([p_si]·R_si·f_i + R_si·m_i)`.
//! `{s}` is the reference grasp of the [`GraspGraph`] and `{w}` a
//! gravity-aligned frame.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::geom::{skew, Rotation, Wrench};
use crate::kin_est::GraspGraph;
use crate::linalg::{least_squares, RANK_TOLERANCE};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaticsError {
    #[error("no static samples")]
    NoSamples,
    #[error("static samples do not constrain direction {direction:?} of the center of mass (singular values {singular_values:?})")]
    InsufficientOrientations { direction: [f64; 3], singular_values: Vec<f64> },
    #[error("sample {hold} has a wrench for robot {robot}, which is not in the grasp graph")]
    UnknownRobot { hold: usize, robot: usize },
    #[error("gravity vector is zero or non-finite")]
    BadGravity,
}

/// One averaged static hold.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSample<T: Real> {
    pub hold: usize,
    /// Orientation of the reference grasp `{s}` in the gravity-aligned frame.
    pub r_ws: Rotation<T>,
    /// Averaged grasp wrench of each robot, in its own grasp frame.
    pub wrenches: BTreeMap<usize, Wrench<T>>,
    /// Sample index range `[start, end)` the hold was averaged over.
    pub window: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassEstimate<T: Real> {
    pub mass: T,
    /// Residual of the vertical equations that were solved.
    pub residual_norm: T,
    /// Norm of the unused horizontal force balance at the estimate.
    pub horizontal_residual: T,
    pub sample_count: usize,
    /// False when the estimate is not a positive mass.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComEstimate<T: Real> {
    /// `p̂_sc`.
    pub position: Vector3<T>,
    pub residual_norm: T,
    pub singular_values: [T; 3],
    pub sample_count: usize,
}

/// Index ranges `[start, end)` over which every force channel of every
/// robot stays within `tolerance` peak to peak for at least
/// `min_duration` seconds. Windows are maximal and disjoint.
pub fn detect_static_windows(forces: &[Vec<Vector3<f64>>], sample_rate: f64, tolerance: f64, min_duration: f64) -> Vec<(usize, usize)> {
    let q = forces.iter().map(|f| f.len()).min().unwrap_or(0);
    let min_len = (min_duration * sample_rate - 1e-9).ceil().max(1.0) as usize;
    let channels = 3 * forces.len();
    let mut out = Vec::new();
    let mut s = 0;
    while s + min_len <= q {
        let mut lo = vec![f64::INFINITY; channels];
        let mut hi = vec![f64::NEG_INFINITY; channels];
        let mut e = s;
        'extend: while e < q {
            for (r, f) in forces.iter().enumerate() {
                for c in 0..3 {
                    let k = 3 * r + c;
                    let v = f[e][c];
                    let (l, h) = (lo[k].min(v), hi[k].max(v));
                    if h - l > tolerance {
                        break 'extend;
                    }
                    lo[k] = l;
                    hi[k] = h;
                }
            }
            e += 1;
        }
        if e - s >= min_len {
            out.push((s, e));
            s = e;
        } else {
            s += 1;
        }
    }
    out
}

fn gravity_direction<T: Real>(gravity: &Vector3<T>) -> Result<Vector3<T>, StaticsError> {
    let n = gravity.norm();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(StaticsError::BadGravity);
    }
    Ok(gravity / n)
}

fn grasp_rotation<T: Real>(graph: &GraspGraph<T>, hold: usize, robot: usize) -> Result<&crate::geom::Transform<T>, StaticsError> {
    graph.get(robot).ok_or(StaticsError::UnknownRobot { hold, robot })
}

/// Mass from the vertical force balance of each sample:
/// `A_q = uᵀ·g`, `b_q = −uᵀ·Σ R_{wi}·f_i` with `u = −g/‖g‖`.
pub fn estimate_mass<T: Real>(
    samples: &[StaticSample<T>],
    graph: &GraspGraph<T>,
    gravity: &Vector3<T>,
) -> Result<MassEstimate<T>, StaticsError> {
    if samples.is_empty() {
        return Err(StaticsError::NoSamples);
    }
    let up = -gravity_direction(gravity)?;
    let a_q = up.dot(gravity);
    let mut sums = Vec::with_capacity(samples.len());
    for s in samples {
        let mut sum = Vector3::zeros();
        for (robot, w) in &s.wrenches {
            let t = grasp_rotation(graph, s.hold, *robot)?;
            sum += (s.r_ws * t.rotation).matrix() * w.force;
        }
        sums.push(sum);
    }
    let a = DMatrix::from_element(samples.len(), 1, a_q);
    let b = DVector::from_iterator(samples.len(), sums.iter().map(|s| -up.dot(s)));
    let sol = least_squares(&a, &b, RANK_TOLERANCE);
    let mass = sol.x[0];
    let horizontal = sums
        .iter()
        .map(|s| {
            let r = *gravity * mass + s;
            (r - up * up.dot(&r)).norm_squared()
        })
        .fold(T::zero(), |acc, x| acc + x)
        .sqrt();
    Ok(MassEstimate {
        mass,
        residual_norm: sol.residual_norm,
        horizontal_residual: horizontal,
        sample_count: samples.len(),
        valid: mass > T::zero() && mass.is_finite(),
    })
}

/// Center of mass `p̂_sc` from `[R_sw·m̂·g]·p_sc = Σ([p_si]·R_si·f_i + R_si·m_i)`.
pub fn estimate_com<T: Real>(
    samples: &[StaticSample<T>],
    mass: T,
    graph: &GraspGraph<T>,
    gravity: &Vector3<T>,
) -> Result<ComEstimate<T>, StaticsError> {
    if samples.is_empty() {
        return Err(StaticsError::NoSamples);
    }
    gravity_direction(gravity)?;
    let n = samples.len();
    let mut a = DMatrix::zeros(3 * n, 3);
    let mut b = DVector::zeros(3 * n);
    for (q, s) in samples.iter().enumerate() {
        let weight_s = s.r_ws.transpose().matrix() * (*gravity * mass);
        let a_q: Matrix3<T> = skew(&weight_s);
        let mut b_q = Vector3::zeros();
        for (robot, w) in &s.wrenches {
            let t = grasp_rotation(graph, s.hold, *robot)?;
            let rf = t.rotation.matrix() * w.force;
            b_q += t.translation.cross(&rf) + t.rotation.matrix() * w.moment;
        }
        a.view_mut((3 * q, 0), (3, 3)).copy_from(&a_q);
        b.rows_mut(3 * q, 3).copy_from(&b_q);
    }
    let sol = least_squares(&a, &b, RANK_TOLERANCE);
    let sigma = [sol.singular_values[0], sol.singular_values[1], sol.singular_values[2]];
    if let Some(d) = sol.null_space.first() {
        return Err(StaticsError::InsufficientOrientations {
            direction: [d[0].as_f64(), d[1].as_f64(), d[2].as_f64()],
            singular_values: sigma.iter().map(|x| x.as_f64()).collect(),
        });
    }
    Ok(ComEstimate {
        position: Vector3::new(sol.x[0], sol.x[1], sol.x[2]),
        residual_norm: sol.residual_norm,
        singular_values: sigma,
        sample_count: n,
    })
}
