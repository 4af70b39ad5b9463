//! Newton–Euler dynamics of the payload and distribution of the required
//! wrench over the grasps.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

use super::SimError;
use crate::geom::Frame;
use crate::{Rotation, Transform, Twist, TwistRate, Wrench};

/// Mass and rotational inertia about the center of mass, expressed in a
/// frame `{b}` located at the center of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyInertia {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
}

/// Net wrench the grippers must apply to the body, expressed in `{b}`.
///
/// `twist` and `rate` are body-frame quantities of `{b}`, `r_wb` is the
/// orientation of `{b}` in the world and `gravity` is the world-frame
/// gravitational acceleration:
///
/// ```text
/// f = m·(v̇ + ω×v − R_wbᵀ·g)
/// m = 𝓘·α + ω×(𝓘·ω)
/// ```
pub fn newton_euler_total_wrench(
    body: &RigidBodyInertia,
    r_wb: &Rotation,
    twist: &Twist,
    rate: &TwistRate,
    gravity: &Vector3<f64>,
) -> Wrench {
    let w = twist.angular;
    let com_accel = rate.linear + w.cross(&twist.linear);
    let g_body = r_wb.transpose().matrix() * gravity;
    let force = (com_accel - g_body) * body.mass;
    let moment = body.inertia * rate.angular + w.cross(&(body.inertia * w));
    Wrench::new(moment, force, twist.frame)
}

/// The linear map from stacked grasp wrenches `(F_1, …, F_N)` (each in its
/// grasp frame) to the net wrench in `{b}`: block `i` is `[Ad_{T_ib}]ᵀ`.
#[derive(Debug, Clone)]
pub struct GraspMap {
    map: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
    null_projector: DMatrix<f64>,
    /// Left singular vectors of directions the grasps cannot produce.
    unreachable: Vec<Vector6<f64>>,
}

const RANK_TOL: f64 = 1e-10;

impl GraspMap {
    /// `t_bi[i]` is the pose of grasp frame `{i}` in `{b}`.
    pub fn new(t_bi: &[Transform]) -> Result<Self, SimError> {
        if t_bi.is_empty() {
            return Err(SimError::InvalidConfig("at least one grasp is required".into()));
        }
        let n = t_bi.len();
        let mut map = DMatrix::zeros(6, 6 * n);
        for (i, t) in t_bi.iter().enumerate() {
            let block = t.inverse().adjoint().transpose();
            map.view_mut((0, 6 * i), (6, 6)).copy_from(&block);
        }
        let svd = map.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd u");
        let v_t = svd.v_t.as_ref().expect("svd v_t");
        let s_max = svd.singular_values.max();
        let mut pseudo_inverse = DMatrix::zeros(6 * n, 6);
        let mut range = DMatrix::zeros(6 * n, 6 * n);
        let mut unreachable = Vec::new();
        for k in 0..svd.singular_values.len() {
            let s = svd.singular_values[k];
            if s > RANK_TOL * s_max {
                let v = v_t.row(k).transpose();
                pseudo_inverse += &v * u.column(k).transpose() / s;
                range += &v * v.transpose();
            } else {
                unreachable.push(Vector6::from_iterator(u.column(k).iter().copied()));
            }
        }
        let null_projector = DMatrix::identity(6 * n, 6 * n) - range;
        Ok(GraspMap { map, pseudo_inverse, null_projector, unreachable })
    }

    pub fn grasp_count(&self) -> usize {
        self.map.ncols() / 6
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.map
    }

    /// Projects arbitrary stacked coefficients onto the internal-force space.
    pub fn internal_component(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        &self.null_projector * coefficients
    }

    /// Net wrench in `{b}` produced by the stacked grasp wrenches.
    pub fn resultant(&self, wrenches: &[Wrench]) -> Wrench {
        let stacked = DVector::from_iterator(
            6 * wrenches.len(),
            wrenches.iter().flat_map(|w| w.to_vector().iter().copied().collect::<Vec<_>>()),
        );
        let total = &self.map * stacked;
        Wrench::from_vector(&Vector6::from_iterator(total.iter().copied()), Frame::COM)
    }

    /// Minimum-norm grasp wrenches reproducing `total`, plus an optional
    /// internal (null-space) component given as already projected stacked
    /// coefficients.
    pub fn distribute(&self, total: &Wrench, internal: Option<&DVector<f64>>) -> Result<Vec<Wrench>, SimError> {
        let target = DVector::from_iterator(6, total.to_vector().iter().copied());
        let mut stacked = &self.pseudo_inverse * &target;
        let achieved = &self.map * &stacked;
        let miss = (&achieved - &target).norm();
        if miss > 1e-9 * target.norm().max(1.0) {
            return Err(SimError::UnrealizableWrench {
                residual: miss,
                subspace: self.unreachable.iter().map(|v| v.iter().copied().collect()).collect(),
            });
        }
        if let Some(c) = internal {
            stacked += c;
        }
        Ok((0..self.grasp_count())
            .map(|i| {
                let v = Vector6::from_iterator(stacked.rows(6 * i, 6).iter().copied());
                Wrench::from_vector(&v, Frame::grasp(i + 1))
            })
            .collect())
    }
}

/// One-shot form of [`GraspMap::distribute`]. `internal`, when given, is
/// projected onto the grasp map's null space before being added.
pub fn distribute_wrench(
    total: &Wrench,
    t_bi: &[Transform],
    internal: Option<&DVector<f64>>,
) -> Result<Vec<Wrench>, SimError> {
    let map = GraspMap::new(t_bi)?;
    let projected = internal.map(|c| map.internal_component(c));
    map.distribute(total, projected.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rot_exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    #[test]
    fn stationary_payload_carries_its_weight() {
        let body = RigidBodyInertia { mass: 11.672, inertia: diag(2.318, 3.215, 5.524) };
        let g = Vector3::new(0.0, 0.0, -9.81);
        let w = newton_euler_total_wrench(
            &body,
            &Rotation::identity(),
            &Twist::zero(Frame::COM),
            &TwistRate::zero(Frame::COM),
            &g,
        );
        assert!((w.force.norm() - 114.50232).abs() < 1e-9);
        assert!((w.force - Vector3::new(0.0, 0.0, 114.50232)).norm() < 1e-9);
        assert_eq!(w.moment, Vector3::zeros());

        // Tilted body: the force is −m·g expressed in the body frame.
        let r = Rotation::rot_x(0.3);
        let w = newton_euler_total_wrench(&body, &r, &Twist::zero(Frame::COM), &TwistRate::zero(Frame::COM), &g);
        assert!((r.matrix() * w.force + g * body.mass).norm() < 1e-12);
    }

    #[test]
    fn principal_spin_has_no_gyroscopic_moment() {
        let body = RigidBodyInertia { mass: 2.0, inertia: diag(1.0, 2.0, 3.0) };
        let twist = Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.5, 0.0), Frame::COM);
        let w = newton_euler_total_wrench(&body, &Rotation::identity(), &twist, &TwistRate::zero(Frame::COM), &Vector3::zeros());
        assert_eq!(w.moment, Vector3::zeros());
        // Centripetal: m·ω×v = 2·(1,0,0)×(0,0.5,0) = (0,0,1).
        assert!((w.force - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn off_axis_spin_gyroscopic_term() {
        let body = RigidBodyInertia { mass: 1.0, inertia: diag(1.0, 2.0, 3.0) };
        let s = 0.5f64.sqrt();
        let twist = Twist::new(Vector3::new(s, s, 0.0), Vector3::zeros(), Frame::COM);
        let w = newton_euler_total_wrench(&body, &Rotation::identity(), &twist, &TwistRate::zero(Frame::COM), &Vector3::zeros());
        assert!((w.moment - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn single_support_carries_everything() {
        let total = Wrench::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0), Frame::COM);
        let out = distribute_wrench(&total, &[Transform::identity()], None).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].to_vector() - total.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn symmetric_pair_shares_vertical_load() {
        let d = 0.4;
        let grasps = [
            Transform::from_translation(Vector3::new(d, 0.0, 0.0)),
            Transform::from_translation(Vector3::new(-d, 0.0, 0.0)),
        ];
        let f = 50.0;
        let total = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, f), Frame::COM);
        let out = distribute_wrench(&total, &grasps, None).unwrap();
        for w in &out {
            assert!((w.force - Vector3::new(0.0, 0.0, f / 2.0)).norm() < 1e-9);
            assert!(w.moment.norm() < 1e-9);
        }
    }

    #[test]
    fn closure_holds_with_and_without_internal_forces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            let grasps: Vec<Transform> = (0..n)
                .map(|_| {
                    let w = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2));
                    Transform::new(rot_exp(&w), p)
                })
                .collect();
            let map = GraspMap::new(&grasps).unwrap();
            for _ in 0..50 {
                let total = Wrench::from_vector(&Vector6::from_fn(|_, _| rng.random_range(-20.0..20.0)), Frame::COM);
                let plain = map.distribute(&total, None).unwrap();
                let back = map.resultant(&plain);
                assert!((back.to_vector() - total.to_vector()).norm() < 1e-9);

                let raw = DVector::from_fn(6 * n, |_, _| rng.random_range(-5.0..5.0));
                let internal = map.internal_component(&raw);
                let squeezed = map.distribute(&total, Some(&internal)).unwrap();
                let back = map.resultant(&squeezed);
                assert!((back.to_vector() - total.to_vector()).norm() < 1e-9);
                if n > 1 {
                    let changed: f64 = plain.iter().zip(&squeezed).map(|(a, b)| (a.to_vector() - b.to_vector()).norm()).sum();
                    assert!(changed > 1e-3);
                }
            }
        }
    }

    #[test]
    fn explicit_adjoint_sum_matches_resultant() {
        let grasps = [
            Transform::new(Rotation::rot_z(0.4), Vector3::new(0.5, 0.1, 0.0)),
            Transform::new(Rotation::rot_z(-1.2), Vector3::new(-0.3, 0.6, 0.05)),
        ];
        let total = Wrench::new(Vector3::new(1.0, 0.0, -2.0), Vector3::new(3.0, 4.0, 100.0), Frame::COM);
        let out = distribute_wrench(&total, &grasps, None).unwrap();
        let mut sum = Vector6::zeros();
        for (t_bi, w) in grasps.iter().zip(&out) {
            sum += t_bi.inverse().adjoint().transpose() * w.to_vector();
        }
        assert!((sum - total.to_vector()).norm() < 1e-9);
    }
}
