//! Payload motion generators with analytic velocities and accelerations.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geom::{rot_exp, rot_log, Frame};
use crate::{Rotation, Transform, Twist, TwistRate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Quintic point-to-point moves through random via poses with dwells.
    RandomVia,
    /// Sum-of-sines rotation about the center of mass plus small translation.
    Periodic,
    /// Smooth transitions between fixed orientations, each held still.
    StaticHolds,
}

fn default_translation_amplitude() -> f64 {
    0.03
}
fn default_transition_time() -> f64 {
    2.0
}
fn default_duration() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryKind,
    #[serde(default)]
    pub via_count: usize,
    #[serde(default = "default_range")]
    pub transit_time_range: (f64, f64),
    #[serde(default = "default_range")]
    pub dwell_time_range: (f64, f64),
    /// Bound on the rotation of any via pose (or periodic amplitude) away
    /// from the start orientation, in degrees.
    #[serde(default = "default_rotation_amplitude")]
    pub rotation_amplitude_deg: f64,
    /// Bound on each translation coordinate of a via pose, in meters.
    #[serde(default = "default_translation_amplitude")]
    pub translation_amplitude: f64,
    /// Hold orientations as exponential coordinates in degrees, relative to
    /// the start orientation of the payload frame.
    #[serde(default)]
    pub hold_orientations: Vec<[f64; 3]>,
    #[serde(default)]
    pub hold_duration: f64,
    /// Duration of each move between holds (s).
    #[serde(default = "default_transition_time")]
    pub transition_time: f64,
    /// Total length of a periodic trajectory (s).
    #[serde(default = "default_duration")]
    pub duration: f64,
}

fn default_range() -> (f64, f64) {
    (0.5, 0.8)
}
fn default_rotation_amplitude() -> f64 {
    10.0
}

impl TrajectoryConfig {
    pub fn random_via(via_count: usize) -> Self {
        TrajectoryConfig {
            kind: TrajectoryKind::RandomVia,
            via_count,
            transit_time_range: default_range(),
            dwell_time_range: default_range(),
            rotation_amplitude_deg: default_rotation_amplitude(),
            translation_amplitude: default_translation_amplitude(),
            hold_orientations: Vec::new(),
            hold_duration: 0.0,
            transition_time: default_transition_time(),
            duration: default_duration(),
        }
    }

    pub fn periodic(duration: f64) -> Self {
        TrajectoryConfig { kind: TrajectoryKind::Periodic, via_count: 0, duration, ..Self::random_via(0) }
    }

    pub fn static_holds(orientations_deg: Vec<[f64; 3]>, hold_duration: f64) -> Self {
        TrajectoryConfig {
            kind: TrajectoryKind::StaticHolds,
            hold_orientations: orientations_deg,
            hold_duration,
            ..Self::random_via(0)
        }
    }

    /// Six tilted orientations used for mass and center-of-mass holds.
    pub fn six_holds() -> Self {
        Self::static_holds(
            vec![
                [0.0, 0.0, 0.0],
                [8.0, 0.0, 0.0],
                [-8.0, 0.0, 0.0],
                [0.0, 8.0, 0.0],
                [0.0, -8.0, 0.0],
                [6.0, 6.0, 0.0],
            ],
            12.0,
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(what.to_string()));
        let range_ok = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0 && r.1.is_finite();
        if !(self.rotation_amplitude_deg >= 0.0 && self.rotation_amplitude_deg <= 90.0) {
            return bad("rotation_amplitude_deg must lie in [0, 90]");
        }
        if !(self.translation_amplitude >= 0.0) {
            return bad("translation_amplitude must be non-negative");
        }
        match self.kind {
            TrajectoryKind::RandomVia => {
                if !range_ok(self.transit_time_range) || !range_ok(self.dwell_time_range) {
                    return bad("transit and dwell time ranges must be positive and ordered");
                }
                if self.via_count == 0 {
                    return bad("random_via needs at least one via point");
                }
            }
            TrajectoryKind::Periodic => {
                if !(self.duration > 0.0) {
                    return bad("periodic duration must be positive");
                }
            }
            TrajectoryKind::StaticHolds => {
                if self.hold_orientations.is_empty() {
                    return Err(SimError::EmptyHoldList);
                }
                if !(self.hold_duration > 0.0 && self.transition_time > 0.0) {
                    return bad("hold_duration and transition_time must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Sampled payload motion. `poses[k]` is the displacement of the payload
/// frame from its pose at `t = 0`; twists and rates are body-frame
/// quantities of the payload frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadTrajectory {
    pub sample_rate: f64,
    pub times: Vec<f64>,
    pub poses: Vec<Transform>,
    pub twists: Vec<Twist>,
    pub rates: Vec<TwistRate>,
}

impl PayloadTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Quintic time scaling `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵` and its first two time
/// derivatives for a move of length `duration`.
pub fn quintic(t: f64, duration: f64) -> (f64, f64, f64) {
    let tau = (t / duration).clamp(0.0, 1.0);
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = 10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2;
    let ds = (30.0 * t2 - 60.0 * t3 + 30.0 * t3 * tau) / duration;
    let dds = (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (duration * duration);
    (s, ds, dds)
}

#[derive(Debug, Clone)]
enum Segment {
    Move { start: f64, duration: f64, from: Transform, to: Transform },
    Hold { start: f64, duration: f64, at: Transform },
}

impl Segment {
    fn end(&self) -> f64 {
        match self {
            Segment::Move { start, duration, .. } | Segment::Hold { start, duration, .. } => start + duration,
        }
    }
}

// Body-frame kinematics of `(R, p)` given world-frame translational
// derivatives and body angular rates.
fn body_state(
    r: Rotation,
    p: Vector3<f64>,
    p_dot: Vector3<f64>,
    p_ddot: Vector3<f64>,
    omega: Vector3<f64>,
    alpha: Vector3<f64>,
) -> (Transform, Twist, TwistRate) {
    let rt = r.transpose();
    let v = rt.matrix() * p_dot;
    let v_dot = rt.matrix() * p_ddot - omega.cross(&v);
    (
        Transform::new(r, p),
        Twist::new(omega, v, Frame::COM),
        TwistRate::new(alpha, v_dot, Frame::COM),
    )
}

fn eval_segment(seg: &Segment, t: f64) -> (Transform, Twist, TwistRate) {
    match seg {
        Segment::Hold { at, .. } => (*at, Twist::zero(Frame::COM), TwistRate::zero(Frame::COM)),
        Segment::Move { start, duration, from, to } => {
            let (s, ds, dds) = quintic(t - start, *duration);
            let w = rot_log(&(from.rotation.transpose() * to.rotation)).vector;
            let d = to.translation - from.translation;
            let r = from.rotation * rot_exp(&(w * s));
            body_state(r, from.translation + d * s, d * ds, d * dds, w * ds, w * dds)
        }
    }
}

fn sample_segments(segments: &[Segment], sample_rate: f64) -> PayloadTrajectory {
    let total = segments.last().map_or(0.0, Segment::end);
    let n = (total * sample_rate + 1e-9).floor() as usize + 1;
    let mut out = PayloadTrajectory {
        sample_rate,
        times: Vec::with_capacity(n),
        poses: Vec::with_capacity(n),
        twists: Vec::with_capacity(n),
        rates: Vec::with_capacity(n),
    };
    let mut idx = 0;
    for k in 0..n {
        let t = k as f64 / sample_rate;
        while idx + 1 < segments.len() && t >= segments[idx].end() {
            idx += 1;
        }
        let (pose, twist, rate) = eval_segment(&segments[idx], t);
        out.times.push(t);
        out.poses.push(pose);
        out.twists.push(twist);
        out.rates.push(rate);
    }
    out
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_via_segments(cfg: &TrajectoryConfig, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let amp = cfg.rotation_amplitude_deg.to_radians();
    let mut segments = Vec::with_capacity(2 * cfg.via_count);
    let mut t = 0.0;
    let mut prev = Transform::identity();
    for _ in 0..cfg.via_count {
        let axis = random_unit(rng);
        let angle = amp * rng.random_range(0.0..=1.0);
        let a = cfg.translation_amplitude;
        let p = if a > 0.0 {
            Vector3::new(rng.random_range(-a..=a), rng.random_range(-a..=a), rng.random_range(-a..=a))
        } else {
            Vector3::zeros()
        };
        let via = Transform::new(rot_exp(&(axis * angle)), p);
        let transit = rng.random_range(cfg.transit_time_range.0..=cfg.transit_time_range.1);
        let dwell = rng.random_range(cfg.dwell_time_range.0..=cfg.dwell_time_range.1);
        segments.push(Segment::Move { start: t, duration: transit, from: prev, to: via });
        t += transit;
        segments.push(Segment::Hold { start: t, duration: dwell, at: via });
        t += dwell;
        prev = via;
    }
    segments
}

fn static_hold_segments(cfg: &TrajectoryConfig) -> Vec<Segment> {
    let mut segments = Vec::with_capacity(2 * cfg.hold_orientations.len());
    let mut t = 0.0;
    let mut prev = Transform::identity();
    for deg in &cfg.hold_orientations {
        let w = Vector3::from(*deg).map(f64::to_radians);
        let at = Transform::from_rotation(rot_exp(&w));
        segments.push(Segment::Move { start: t, duration: cfg.transition_time, from: prev, to: at });
        t += cfg.transition_time;
        segments.push(Segment::Hold { start: t, duration: cfg.hold_duration, at });
        t += cfg.hold_duration;
        prev = at;
    }
    segments
}

/// One sinusoid `a·sin(2π f t + φ)` with its derivatives.
#[derive(Debug, Clone, Copy)]
struct Sine {
    amplitude: f64,
    freq: f64,
    phase: f64,
}

impl Sine {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let w = 2.0 * std::f64::consts::PI * self.freq;
        let arg = w * t + self.phase;
        (
            self.amplitude * arg.sin(),
            self.amplitude * w * arg.cos(),
            -self.amplitude * w * w * arg.sin(),
        )
    }
}

fn sample_periodic(cfg: &TrajectoryConfig, sample_rate: f64, rng: &mut ChaCha8Rng) -> PayloadTrajectory {
    let amp = cfg.rotation_amplitude_deg.to_radians();
    let mut draw = |amplitude: f64| Sine {
        amplitude,
        freq: rng.random_range(0.2..0.6),
        phase: 0.0,
    };
    let angles = [draw(amp), draw(amp), draw(amp)];
    let shifts = [
        draw(cfg.translation_amplitude),
        draw(cfg.translation_amplitude),
        draw(cfg.translation_amplitude),
    ];
    let axes = [Vector3::z(), Vector3::y(), Vector3::x()];

    let n = (cfg.duration * sample_rate + 1e-9).floor() as usize + 1;
    let mut out = PayloadTrajectory {
        sample_rate,
        times: Vec::with_capacity(n),
        poses: Vec::with_capacity(n),
        twists: Vec::with_capacity(n),
        rates: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = k as f64 / sample_rate;
        // R = Rz(θ1)·Ry(θ2)·Rx(θ3). Accumulating from the right keeps every
        // term in body coordinates: ω = Σ (R_{k+1}···R_n)ᵀ·a_k·θ̇_k.
        let mut r = Rotation::identity();
        let mut omega = Vector3::zeros();
        let mut alpha = Vector3::zeros();
        for (axis, sine) in axes.iter().zip(&angles).rev() {
            let (th, dth, ddth) = sine.eval(t);
            let step = rot_exp(&(axis * th));
            // Carry the already accumulated body rates through the new
            // left factor: the new term is a·θ̇ in the factor's own frame.
            let tail_t = r.transpose();
            let dir = tail_t.matrix() * axis;
            let term = dir * dth;
            alpha += dir * ddth - omega.cross(&term);
            omega += term;
            r = step * r;
        }
        let mut p = Vector3::zeros();
        let mut p_dot = Vector3::zeros();
        let mut p_ddot = Vector3::zeros();
        for i in 0..3 {
            let (x, dx, ddx) = shifts[i].eval(t);
            p[i] = x;
            p_dot[i] = dx;
            p_ddot[i] = ddx;
        }
        let (pose, twist, rate) = body_state(r, p, p_dot, p_ddot, omega, alpha);
        out.times.push(t);
        out.poses.push(pose);
        out.twists.push(twist);
        out.rates.push(rate);
    }
    out
}

/// Samples a twice-differentiable payload trajectory at `sample_rate`.
/// Velocities and accelerations are analytic derivatives of the pose curve.
pub fn generate_payload_trajectory(
    config: &TrajectoryConfig,
    sample_rate: f64,
    seed: u64,
) -> Result<PayloadTrajectory, SimError> {
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(SimError::InvalidConfig(format!("sample rate must be positive, got {sample_rate}")));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match config.kind {
        TrajectoryKind::RandomVia => sample_segments(&random_via_segments(config, &mut rng), sample_rate),
        TrajectoryKind::StaticHolds => sample_segments(&static_hold_segments(config), sample_rate),
        TrajectoryKind::Periodic => sample_periodic(config, sample_rate, &mut rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{se3_log, vee};
    use nalgebra::Matrix3;

    fn finite_difference_check(traj: &PayloadTrajectory, tol_v: f64, tol_a: f64) {
        // Body twist from neighbouring poses: log(T_kᵀ T_{k±1}) / h.
        let h = 1.0 / traj.sample_rate;
        for k in (1..traj.len() - 1).step_by(7) {
            let fwd = se3_log(&(traj.poses[k].inverse() * traj.poses[k + 1]));
            let bwd = se3_log(&(traj.poses[k].inverse() * traj.poses[k - 1]));
            let v = (fwd - bwd) / (2.0 * h);
            let err = (v - traj.twists[k].to_vector()).norm();
            assert!(err < tol_v, "twist mismatch {err} at {k}");
            let a = (traj.twists[k + 1].to_vector() - traj.twists[k - 1].to_vector()) / (2.0 * h);
            let err = (a - traj.rates[k].to_vector()).norm();
            assert!(err < tol_a, "rate mismatch {err} at {k}");
        }
    }

    #[test]
    fn quintic_boundary_conditions() {
        assert_eq!(quintic(0.0, 0.7), (0.0, 0.0, 0.0));
        let (s, ds, dds) = quintic(0.7, 0.7);
        assert!((s - 1.0).abs() < 1e-15 && ds.abs() < 1e-12 && dds.abs() < 1e-12);
        let (s, _, dds) = quintic(0.35, 0.7);
        assert!((s - 0.5).abs() < 1e-15 && dds.abs() < 1e-12);
    }

    #[test]
    fn single_hold_is_stationary() {
        let cfg = TrajectoryConfig::static_holds(vec![[0.0, 0.0, 0.0]], 5.0);
        let traj = generate_payload_trajectory(&cfg, 100.0, 1).unwrap();
        assert!(traj.twists.iter().all(|v| v.to_vector().norm() == 0.0));
        assert!(traj.rates.iter().all(|a| a.to_vector().norm() == 0.0));
        assert_eq!(traj.len(), 701);
    }

    #[test]
    fn holds_reach_their_orientations() {
        let cfg = TrajectoryConfig::six_holds();
        let traj = generate_payload_trajectory(&cfg, 100.0, 1).unwrap();
        // Middle of the second hold: 2 s move + 12 s hold + 2 s move + 6 s.
        let k = (22.0 * 100.0) as usize;
        let expected = rot_exp(&Vector3::new(8f64.to_radians(), 0.0, 0.0));
        assert!((traj.poses[k].rotation.matrix() - expected.matrix()).norm() < 1e-12);
        assert_eq!(traj.twists[k].to_vector().norm(), 0.0);
    }

    #[test]
    fn empty_hold_list_is_rejected() {
        let cfg = TrajectoryConfig::static_holds(vec![], 5.0);
        assert!(matches!(generate_payload_trajectory(&cfg, 100.0, 0), Err(SimError::EmptyHoldList)));
        let ok = TrajectoryConfig::random_via(3);
        assert!(generate_payload_trajectory(&ok, 0.0, 0).is_err());
    }

    #[test]
    fn random_via_is_deterministic_and_bounded() {
        let cfg = TrajectoryConfig::random_via(80);
        let a = generate_payload_trajectory(&cfg, 100.0, 42).unwrap();
        let b = generate_payload_trajectory(&cfg, 100.0, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_payload_trajectory(&cfg, 100.0, 43).unwrap();
        assert_ne!(a.poses, c.poses);
        assert!(a.duration() >= 80.0 - 0.01 && a.duration() <= 128.0);
        for pose in &a.poses {
            assert!(pose.rotation.angle() <= 10f64.to_radians() + 1e-12);
            assert!(pose.translation.amax() <= 0.03 + 1e-12);
        }
    }

    #[test]
    fn random_via_derivatives_are_consistent() {
        let cfg = TrajectoryConfig::random_via(6);
        let traj = generate_payload_trajectory(&cfg, 1000.0, 5).unwrap();
        finite_difference_check(&traj, 1e-4, 0.1);
    }

    #[test]
    fn periodic_derivatives_are_consistent() {
        let cfg = TrajectoryConfig::periodic(8.0);
        let traj = generate_payload_trajectory(&cfg, 1000.0, 9).unwrap();
        assert_eq!(traj.poses[0], Transform::identity());
        finite_difference_check(&traj, 1e-5, 1e-4);
    }

    #[test]
    fn periodic_rotation_matches_euler_product() {
        let cfg = TrajectoryConfig::periodic(3.0);
        let traj = generate_payload_trajectory(&cfg, 50.0, 2).unwrap();
        // Body angular velocity equals vee(Rᵀ Ṙ); check Ṙ by differences.
        let h = 1.0 / traj.sample_rate;
        for k in 1..traj.len() - 1 {
            let r = traj.poses[k].rotation.matrix();
            let d: Matrix3<f64> = (traj.poses[k + 1].rotation.matrix() - traj.poses[k - 1].rotation.matrix()) / (2.0 * h);
            let w = vee(&(r.transpose() * d));
            assert!((w - traj.twists[k].angular).norm() < 5e-3);
        }
    }
}
