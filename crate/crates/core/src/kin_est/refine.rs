//! Joint refinement of a grasp graph over all pairs and 3-cycles.
//!
//! Unknowns are right perturbations `T̂_{ref,i}·exp(ξ_i)` of every
//! non-reference frame. The cost is
//!
//! ```text
//! Σ_{i≠j} Σ_q w_pair·‖Ad(T̂_ij)·V_j[q] − V_i[q]‖² + Σ_{i<j<k} w_loop·‖log(T̂_ij·T̂_jk·T̂_ki)‖²
//! ```
//!
//! minimized by BFGS with a central-difference gradient and a backtracking
//! line search that only ever accepts decreases.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, Vector6};
use serde::{Deserialize, Serialize};

use super::{GraspGraph, TwistBatch};
use crate::geom::{se3_exp, se3_log, Transform};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementWeights {
    pub pair: f64,
    /// `None` uses the sample count `Q`.
    pub loop_: Option<f64>,
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an iteration falls below this.
    pub relative_tolerance: f64,
    pub gradient_step: f64,
}

impl Default for RefinementWeights {
    fn default() -> Self {
        RefinementWeights { pair: 1.0, loop_: None, max_iterations: 200, relative_tolerance: 1e-10, gradient_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementInfo {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Set when the cost became non-finite; the input graph is returned.
    pub failed: bool,
}

/// Triangular factor of `[V_jᵀ | V_iᵀ]`: the pair cost for any `A` is
/// `‖R·[Aᵀ; −I]‖_F²`, independent of the sample count.
struct PairStats {
    i: usize,
    j: usize,
    r: SMatrix<f64, 12, 12>,
}

struct Problem {
    reference: usize,
    free: Vec<usize>,
    base: BTreeMap<usize, Transform<f64>>,
    pairs: Vec<PairStats>,
    cycles: Vec<[usize; 3]>,
    w_pair: f64,
    w_loop: f64,
    /// Weighted squared norm of all twist data; costs below a tiny fraction
    /// of it are at the rounding floor.
    scale: f64,
}

fn compress(bi: &TwistBatch<f64>, bj: &TwistBatch<f64>) -> SMatrix<f64, 12, 12> {
    let q = bi.len();
    let mut m = DMatrix::zeros(q.max(12), 12);
    for k in 0..q {
        for r in 0..3 {
            m[(k, r)] = bj.angular[(r, k)];
            m[(k, 3 + r)] = bj.linear[(r, k)];
            m[(k, 6 + r)] = bi.angular[(r, k)];
            m[(k, 9 + r)] = bi.linear[(r, k)];
        }
    }
    let r = m.qr().r();
    SMatrix::<f64, 12, 12>::from_fn(|a, b| r[(a, b)])
}

fn to_f64_batch<T: Real>(b: &TwistBatch<T>) -> TwistBatch<f64> {
    TwistBatch {
        robot: b.robot,
        times: b.times.clone(),
        angular: b.angular.map(|x| x.as_f64()),
        linear: b.linear.map(|x| x.as_f64()),
    }
}

impl Problem {
    fn new<T: Real>(graph: &GraspGraph<T>, batches: &[TwistBatch<T>], weights: &RefinementWeights) -> Self {
        let base: BTreeMap<usize, Transform<f64>> = graph.transforms.iter().map(|(k, t)| (*k, t.cast::<f64>())).collect();
        let by_robot: BTreeMap<usize, TwistBatch<f64>> = batches
            .iter()
            .filter(|b| base.contains_key(&b.robot))
            .map(|b| (b.robot, to_f64_batch(b)))
            .collect();
        let ids: Vec<usize> = by_robot.keys().copied().collect();
        let mut pairs = Vec::new();
        for &i in &ids {
            for &j in &ids {
                if i != j {
                    pairs.push(PairStats { i, j, r: compress(&by_robot[&i], &by_robot[&j]) });
                }
            }
        }
        let all: Vec<usize> = base.keys().copied().collect();
        let mut cycles = Vec::new();
        for a in 0..all.len() {
            for b in a + 1..all.len() {
                for c in b + 1..all.len() {
                    cycles.push([all[a], all[b], all[c]]);
                }
            }
        }
        let q = by_robot.values().map(|b| b.len()).max().unwrap_or(0) as f64;
        let scale = weights.pair * pairs.iter().map(|p| p.r.norm_squared()).sum::<f64>();
        Problem {
            scale,
            reference: graph.reference,
            free: all.iter().copied().filter(|&f| f != graph.reference).collect(),
            base,
            pairs,
            cycles,
            w_pair: weights.pair,
            w_loop: weights.loop_.unwrap_or(q),
        }
    }

    fn transforms(&self, x: &DVector<f64>) -> BTreeMap<usize, Transform<f64>> {
        let mut out = BTreeMap::new();
        out.insert(self.reference, Transform::identity());
        for (n, f) in self.free.iter().enumerate() {
            let xi = Vector6::from_iterator(x.rows(6 * n, 6).iter().copied());
            out.insert(*f, self.base[f] * se3_exp(&xi));
        }
        out
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        let t = self.transforms(x);
        let rel = |i: usize, j: usize| t[&i].inverse() * t[&j];
        let mut total = 0.0;
        for p in &self.pairs {
            let ad: Matrix6<f64> = rel(p.i, p.j).adjoint();
            let mut stacked = SMatrix::<f64, 12, 6>::zeros();
            stacked.fixed_view_mut::<6, 6>(0, 0).copy_from(&ad.transpose());
            stacked.fixed_view_mut::<6, 6>(6, 0).copy_from(&(-Matrix6::identity()));
            total += self.w_pair * (p.r * stacked).norm_squared();
        }
        for [i, j, k] in &self.cycles {
            let loop_t = rel(*i, *j) * rel(*j, *k) * rel(*k, *i);
            total += self.w_loop * se3_log(&loop_t).norm_squared();
        }
        total
    }

    fn gradient(&self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        let mut probe = x.clone();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let up = self.cost(&probe);
            probe[k] = x[k] - h;
            let down = self.cost(&probe);
            probe[k] = x[k];
            g[k] = (up - down) / (2.0 * h);
        }
        g
    }
}

/// Evaluates the refinement cost of `graph` on `batches` without changing it.
pub fn loop_closure_cost<T: Real>(graph: &GraspGraph<T>, batches: &[TwistBatch<T>], weights: &RefinementWeights) -> f64 {
    let p = Problem::new(graph, batches, weights);
    p.cost(&DVector::zeros(6 * p.free.len()))
}

/// Refines every non-reference transform of `graph` jointly. The returned
/// cost never exceeds the initial cost.
pub fn refine_loop_closure<T: Real>(
    graph: &GraspGraph<T>,
    batches: &[TwistBatch<T>],
    weights: &RefinementWeights,
) -> GraspGraph<T> {
    let problem = Problem::new(graph, batches, weights);
    let n = 6 * problem.free.len();
    let mut x = DVector::zeros(n);
    let mut f = problem.cost(&x);
    let initial_cost = f;
    let fail = |iterations| {
        let mut g = graph.clone();
        g.refinement = Some(RefinementInfo { iterations, initial_cost, final_cost: initial_cost, failed: true });
        g
    };
    if !f.is_finite() {
        return fail(0);
    }

    let h = weights.gradient_step;
    let mut g = problem.gradient(&x, h);
    let mut inv_h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut iterations = 0;
    while iterations < weights.max_iterations && n > 0 {
        if !g.iter().all(|v| v.is_finite()) {
            return fail(iterations);
        }
        if g.norm() == 0.0 || f <= 1e-20 * problem.scale {
            break;
        }
        let mut dir = -(&inv_h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            inv_h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        if !scaled {
            // First step: keep the trial move to about 0.1 in the
            // exponential coordinates.
            let len = dir.norm();
            if len > 0.1 {
                dir *= 0.1 / len;
                slope *= 0.1 / len;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let ft = problem.cost(&trial);
            if !ft.is_finite() {
                step *= 0.5;
                continue;
            }
            if ft < f && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else { break };
        iterations += 1;
        let decrease = (f - f_new) / f;
        let g_new = problem.gradient(&x_new, h);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if !scaled {
                inv_h *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            inv_h += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        if decrease < weights.relative_tolerance {
            break;
        }
    }

    let t = problem.transforms(&x);
    let mut out = GraspGraph::new(graph.reference);
    for (k, v) in t {
        out.set(k, v.cast::<T>());
    }
    out.refinement = Some(RefinementInfo { iterations, initial_cost, final_cost: f, failed: false });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rot_exp, rotation_error_deg};
    use nalgebra::{Matrix3xX, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn truth() -> Vec<Transform<f64>> {
        vec![
            Transform::identity(),
            Transform::new(rot_exp(&Vector3::new(0.0, 0.0, 0.8)), Vector3::new(0.6, 0.5, 0.0)),
            Transform::new(rot_exp(&Vector3::new(0.02, -0.01, -1.6)), Vector3::new(1.1, -0.3, 0.04)),
        ]
    }

    /// Twist batches of three grasps on a body moving with random twists
    /// (expressed at grasp 1), plus optional noise.
    fn batches(q: usize, sigma: f64, seed: u64) -> Vec<TwistBatch<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = truth();
        let mut v1 = Vec::with_capacity(q);
        for _ in 0..q {
            v1.push(Vector6::from_fn(|_, _| StandardNormal.sample(&mut rng)));
        }
        t1.iter()
            .enumerate()
            .map(|(idx, t_1i)| {
                let ad = t_1i.inverse().adjoint();
                let mut ang = Matrix3xX::zeros(q);
                let mut lin = Matrix3xX::zeros(q);
                for (k, v) in v1.iter().enumerate() {
                    let vi = ad * v;
                    let mut noise = || -> f64 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sigma * z
                    };
                    ang.set_column(k, &Vector3::new(vi[0] + noise(), vi[1] + noise(), vi[2] + noise()));
                    lin.set_column(k, &Vector3::new(vi[3] + noise(), vi[4] + noise(), vi[5] + noise()));
                }
                TwistBatch::new(idx + 1, (0..q).map(|k| k as f64 * 0.01).collect(), ang, lin).unwrap()
            })
            .collect()
    }

    fn graph_from(ts: &[Transform<f64>]) -> GraspGraph<f64> {
        let mut g = GraspGraph::new(1);
        for (k, t) in ts.iter().enumerate() {
            g.set(k + 1, *t);
        }
        g
    }

    #[test]
    fn exact_graph_is_a_fixed_point() {
        let data = batches(300, 0.0, 1);
        let g = graph_from(&truth());
        let w = RefinementWeights::default();
        assert!(loop_closure_cost(&g, &data, &w) < 1e-12);
        let out = refine_loop_closure(&g, &data, &w);
        let info = out.refinement.clone().unwrap();
        assert_eq!(info.iterations, 0);
        assert!(!info.failed);
        assert!(info.final_cost <= info.initial_cost);
    }

    #[test]
    fn recovers_from_perturbed_start() {
        let data = batches(400, 0.0, 2);
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let perturbed: Vec<Transform<f64>> = t
            .iter()
            .enumerate()
            .map(|(k, x)| {
                if k == 0 {
                    return *x;
                }
                let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
                let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
                Transform::new(x.rotation * rot_exp(&(axis * 5f64.to_radians())), x.translation + dir * 0.05)
            })
            .collect();
        let g = graph_from(&perturbed);
        let w = RefinementWeights::default();
        let out = refine_loop_closure(&g, &data, &w);
        let info = out.refinement.clone().unwrap();
        assert!(info.final_cost < info.initial_cost);
        for (k, x) in t.iter().enumerate().skip(1) {
            let est = out.get(k + 1).unwrap();
            assert!(rotation_error_deg(&x.rotation, &est.rotation) < 1e-4);
            assert!((x.translation - est.translation).norm() < 1e-4);
        }
    }

    #[test]
    fn noisy_refinement_never_increases_cost() {
        for seed in 0..5 {
            let data = batches(200, 0.05, seed);
            let g = graph_from(&truth());
            let w = RefinementWeights::default();
            let out = refine_loop_closure(&g, &data, &w);
            let info = out.refinement.clone().unwrap();
            assert!(info.final_cost <= info.initial_cost);
            assert!((loop_closure_cost(&out, &data, &w) - info.final_cost).abs() <= 1e-9 * info.final_cost);
        }
    }

    #[test]
    fn compressed_cost_matches_direct_sum() {
        let data = batches(50, 0.1, 4);
        let g = graph_from(&truth());
        let w = RefinementWeights { loop_: Some(0.0), ..Default::default() };
        let mut direct = 0.0;
        for bi in &data {
            for bj in &data {
                if bi.robot == bj.robot {
                    continue;
                }
                let ad = g.relative(bi.robot, bj.robot).adjoint();
                for q in 0..bi.len() {
                    let (wj, vj) = bj.twist(q);
                    let (wi, vi) = bi.twist(q);
                    let vj6 = Vector6::new(wj.x, wj.y, wj.z, vj.x, vj.y, vj.z);
                    let vi6 = Vector6::new(wi.x, wi.y, wi.z, vi.x, vi.y, vi.z);
                    direct += (ad * vj6 - vi6).norm_squared();
                }
            }
        }
        let c = loop_closure_cost(&g, &data, &w);
        assert!((c - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn non_finite_data_flags_failure() {
        let mut data = batches(20, 0.0, 5);
        data[1].linear[(0, 3)] = f64::NAN;
        let g = graph_from(&truth());
        let out = refine_loop_closure(&g, &data, &RefinementWeights::default());
        let info = out.refinement.clone().unwrap();
        assert!(info.failed);
        assert_eq!(out.transforms, g.transforms);
    }
}
