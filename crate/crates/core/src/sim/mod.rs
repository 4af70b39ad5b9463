//! Synthetic ground truth: a prescribed payload trajectory, rigidly attached
//! grasp frames, Newton–Euler wrenches shared among the grasps, and
//! configurable measurement noise.
//!
//! Frames: `{w}` is the gravity-aligned world frame. The payload body frame
//! is the principal center-of-mass frame `{c}`. Each robot reports its grasp
//! pose `T_{i0 i}` relative to its own pose at `t = 0`.

pub mod dynamics;
pub mod presets;
pub mod trajectory;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{rot_exp, rot_log, Frame};
use crate::{Rotation, Transform, Twist, TwistRate, Wrench};
pub use dynamics::{distribute_wrench, newton_euler_total_wrench, GraspMap, RigidBodyInertia};
pub use trajectory::{generate_payload_trajectory, PayloadTrajectory, TrajectoryConfig, TrajectoryKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("static_holds trajectory needs at least one hold orientation")]
    EmptyHoldList,
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("wrench cannot be produced by the grasps (residual {residual:.3e}); unreachable directions {subspace:?}")]
    UnrealizableWrench { residual: f64, subspace: Vec<Vec<f64>> },
}

fn deg_vec(v: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0].to_radians(), v[1].to_radians(), v[2].to_radians())
}

fn rot_deg(v: &[f64; 3]) -> Rotation {
    rot_exp(&deg_vec(v))
}

/// A rigid transform written as exponential coordinates in degrees plus a
/// translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub rotation_deg: [f64; 3],
    pub position: [f64; 3],
}

impl TransformSpec {
    pub fn to_transform(&self) -> Transform {
        Transform::new(rot_deg(&self.rotation_deg), Vector3::from(self.position))
    }

    pub fn from_transform(t: &Transform) -> Self {
        let w = t.rotation.log().vector;
        TransformSpec {
            rotation_deg: [w.x.to_degrees(), w.y.to_degrees(), w.z.to_degrees()],
            position: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

/// File form of a payload: grasps are given as a chain
/// `T_12, T_23, …, T_{N-1,N}` with an optional closing link `T_N1` that is
/// kept for reference only (the chain defines the geometry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadConfig {
    pub mass: f64,
    /// Center-of-mass frame `T_1c`.
    pub com: TransformSpec,
    pub principal_inertia: [f64; 3],
    #[serde(default)]
    pub grasp_chain: Vec<TransformSpec>,
    #[serde(default)]
    pub closing_link: Option<TransformSpec>,
}

impl PayloadConfig {
    pub fn to_model(&self) -> Result<PayloadModel, SimError> {
        let mut grasps = vec![Transform::identity()];
        for link in &self.grasp_chain {
            let last = *grasps.last().expect("non-empty");
            grasps.push(last * link.to_transform());
        }
        let model = PayloadModel {
            mass: self.mass,
            t_1c: self.com.to_transform(),
            principal_inertia: Vector3::from(self.principal_inertia),
            grasp_transforms: grasps,
        };
        model.validate()?;
        Ok(model)
    }

    /// Mismatch of the closed chain `T_12·…·T_N1` from identity, as
    /// (rotation degrees, translation meters).
    pub fn closing_error(&self) -> Option<(f64, f64)> {
        let close = self.closing_link?.to_transform();
        let mut t = Transform::identity();
        for link in &self.grasp_chain {
            t = t * link.to_transform();
        }
        let t = t * close;
        Some((t.rotation.angle().to_degrees(), t.translation.norm()))
    }
}

/// Physical description of the payload and its grasps. Grasp frame `{1}`
/// is the reference: `grasp_transforms[0]` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadModel {
    pub mass: f64,
    pub t_1c: Transform,
    pub principal_inertia: Vector3<f64>,
    /// `T_1i` for `i = 1…N`.
    pub grasp_transforms: Vec<Transform>,
}

impl PayloadModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidPayload(s));
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        let i = self.principal_inertia;
        if !i.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return bad(format!("principal inertias must be positive, got {:?}", i.as_slice()));
        }
        let slack = 1e-12 * i.sum();
        if i[0] + i[1] < i[2] - slack || i[1] + i[2] < i[0] - slack || i[2] + i[0] < i[1] - slack {
            return bad(format!("principal inertias {:?} violate the triangle inequality", i.as_slice()));
        }
        if self.grasp_transforms.is_empty() {
            return bad("at least one grasp is required".into());
        }
        let first = &self.grasp_transforms[0];
        if (first.to_homogeneous() - nalgebra::Matrix4::identity()).norm() > 1e-12 {
            return bad("T_11 must be the identity".into());
        }
        Ok(())
    }

    pub fn robot_count(&self) -> usize {
        self.grasp_transforms.len()
    }

    /// `T_ij` from 1-based robot ids.
    pub fn relative(&self, i: usize, j: usize) -> Transform {
        self.grasp_transforms[i - 1].inverse() * self.grasp_transforms[j - 1]
    }

    /// Pose of grasp `{i}` (1-based) in the principal frame `{c}`.
    pub fn t_ci(&self, i: usize) -> Transform {
        self.t_1c.inverse() * self.grasp_transforms[i - 1]
    }

    pub fn com_position(&self) -> Vector3<f64> {
        self.t_1c.translation
    }

    pub fn inertia_c(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.principal_inertia)
    }

    /// Inertia about the center of mass in a frame aligned with `{1}`.
    pub fn inertia_b(&self) -> Matrix3<f64> {
        let r = self.t_1c.rotation.matrix();
        r * self.inertia_c() * r.transpose()
    }
}

/// Measurement corruption. All magnitudes are standard deviations unless
/// noted; zero disables a source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub pose_position_sigma: f64,
    pub pose_rotation_sigma: f64,
    pub wrench_force_sigma: f64,
    pub wrench_moment_sigma: f64,
    /// Step (rad) applied to the exponential coordinates of each pose.
    pub encoder_quantization: f64,
    /// Norm (N) of a constant null-space internal wrench per trial.
    pub internal_force_amplitude: f64,
    /// Per-robot constant force offset drawn once per trial (N).
    pub wrench_force_bias_sigma: f64,
    /// Rotation (rad, per axis) of each as-built grasp frame away from its
    /// nominal pose. Drawn from the scenario name, so every trial and
    /// recording of a scenario shares it.
    pub grasp_rotation_offset_sigma: f64,
    /// Translation (m, per axis) of each as-built grasp frame.
    pub grasp_position_offset_sigma: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.pose_position_sigma,
            self.pose_rotation_sigma,
            self.wrench_force_sigma,
            self.wrench_moment_sigma,
            self.encoder_quantization,
            self.internal_force_amplitude,
            self.wrench_force_bias_sigma,
            self.grasp_rotation_offset_sigma,
            self.grasp_position_offset_sigma,
        ];
        if all.iter().all(|x| *x >= 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("noise magnitudes must be finite and non-negative".into()))
        }
    }
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}
fn default_sample_rate() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub payload: PayloadConfig,
    /// World-frame gravity (m/s²).
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Orientation of grasp frame `{1}` in the world at `t = 0`,
    /// exponential coordinates in degrees.
    #[serde(default)]
    pub initial_attitude_deg: [f64; 3],
    #[serde(default)]
    pub noise: NoiseConfig,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<PayloadModel, SimError> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(SimError::InvalidConfig(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(SimError::InvalidConfig("gravity must be finite".into()));
        }
        self.noise.validate()?;
        self.trajectory.validate()?;
        self.payload.to_model()
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// `R_{w 1_0}`: orientation of robot 1's home frame in the world.
    pub fn initial_attitude(&self) -> Rotation {
        rot_deg(&self.initial_attitude_deg)
    }
}

/// Per-robot streams: pose `T_{i0 i}` and grasp wrench `F_i` in `{i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotStreams {
    pub poses: Vec<Transform>,
    pub wrenches: Vec<Wrench>,
}

/// Noise-free per-robot kinematics and wrenches.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStreams {
    pub poses: Vec<Transform>,
    pub twists: Vec<Twist>,
    pub rates: Vec<TwistRate>,
    pub wrenches: Vec<Wrench>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthDataset {
    pub scenario: ScenarioConfig,
    /// Nominal payload, the reference for reported errors.
    pub truth: PayloadModel,
    /// Payload the measurements come from; differs from `truth` only by
    /// the grasp offsets.
    pub assembled: PayloadModel,
    pub times: Vec<f64>,
    pub raw: Vec<RobotStreams>,
    pub reference: Vec<ReferenceStreams>,
    /// Payload motion in `{c}` (poses are world poses `T_wc`).
    pub payload: PayloadTrajectory,
    /// Newton–Euler wrench in `{c}` at every sample.
    pub total_wrench: Vec<Wrench>,
}

impl GroundTruthDataset {
    pub fn robot_count(&self) -> usize {
        self.raw.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Per-robot kinematics from the payload body motion. `t_ci` is the fixed
/// grasp pose in the body frame; `body_poses` are world poses of the body.
/// Returned poses are relative to the robot's first pose.
pub fn rigid_attach(
    body_poses: &[Transform],
    twists: &[Twist],
    rates: &[TwistRate],
    t_ci: &Transform,
    frame: Frame,
) -> (Vec<Transform>, Vec<Twist>, Vec<TwistRate>) {
    let t_ic = t_ci.inverse();
    let home_inv = body_poses.first().map(|t| (*t * *t_ci).inverse()).unwrap_or_else(Transform::identity);
    let poses = body_poses.iter().map(|t| home_inv * *t * *t_ci).collect();
    let tw = twists
        .iter()
        .map(|v| {
            let (w, l) = t_ic.act_twist_raw(&v.angular, &v.linear);
            Twist::new(w, l, frame)
        })
        .collect();
    let rt = rates
        .iter()
        .map(|a| {
            let (w, l) = t_ic.act_twist_raw(&a.angular, &a.linear);
            TwistRate::new(w, l, frame)
        })
        .collect();
    (poses, tw, rt)
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let mut d = || -> f64 { StandardNormal.sample(rng) };
    Vector3::new(d(), d(), d()) * sigma
}

fn quantize(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_TRAJECTORY: u64 = 1;
const STREAM_POSE: u64 = 2;
const STREAM_WRENCH: u64 = 3;
const STREAM_INTERNAL: u64 = 4;

const STREAM_ASSEMBLY: u64 = 5;

/// Applies the grasp offsets: `T_1'i' = E_1⁻¹·T_1i·E_i`, `T_1'c = E_1⁻¹·T_1c`.
fn assemble(truth: &PayloadModel, scenario: &ScenarioConfig) -> PayloadModel {
    let noise = &scenario.noise;
    if noise.grasp_rotation_offset_sigma == 0.0 && noise.grasp_position_offset_sigma == 0.0 {
        return truth.clone();
    }
    let digest = Sha256::digest(scenario.name.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = rng_stream(seed, STREAM_ASSEMBLY);
    let offsets: Vec<Transform> = (0..truth.robot_count())
        .map(|_| {
            let r = rot_exp(&gaussian3(&mut rng, noise.grasp_rotation_offset_sigma));
            Transform::new(r, gaussian3(&mut rng, noise.grasp_position_offset_sigma))
        })
        .collect();
    let e1_inv = offsets[0].inverse();
    let mut grasps: Vec<Transform> =
        truth.grasp_transforms.iter().zip(&offsets).map(|(t, e)| e1_inv * *t * *e).collect();
    grasps[0] = Transform::identity();
    PayloadModel { t_1c: e1_inv * truth.t_1c, grasp_transforms: grasps, ..truth.clone() }
}

fn corrupt_pose(t: &Transform, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> Transform {
    let mut r = t.rotation;
    let mut p = t.translation;
    if noise.pose_rotation_sigma > 0.0 {
        r = rot_exp(&gaussian3(rng, noise.pose_rotation_sigma)) * r;
    }
    if noise.pose_position_sigma > 0.0 {
        p += gaussian3(rng, noise.pose_position_sigma);
    }
    if noise.encoder_quantization > 0.0 {
        let q = noise.encoder_quantization;
        r = rot_exp(&rot_log(&r).vector.map(|x| quantize(x, q)));
    }
    Transform::new(r, p)
}

/// Composes trajectory, rigid attachment, Newton–Euler, wrench
/// distribution and noise. Deterministic in `scenario.seed`.
pub fn synthesize_dataset(scenario: &ScenarioConfig) -> Result<GroundTruthDataset, SimError> {
    let truth = scenario.validate()?;
    let assembled = assemble(&truth, scenario);
    let n = truth.robot_count();
    let seed = scenario.seed;
    let motion = generate_payload_trajectory(
        &scenario.trajectory,
        scenario.sample_rate,
        rng_stream(seed, STREAM_TRAJECTORY).next_u64(),
    )?;

    // World pose of {c}: T_wc(t) = T_w1(0)·T_1c·D(t).
    let t_wc0 = Transform::from_rotation(scenario.initial_attitude()) * assembled.t_1c;
    let world: Vec<Transform> = motion.poses.iter().map(|d| t_wc0 * *d).collect();
    let gravity = scenario.gravity();
    let body = RigidBodyInertia { mass: truth.mass, inertia: truth.inertia_c() };

    let t_c: Vec<Transform> = (1..=n).map(|i| assembled.t_ci(i)).collect();
    let map = GraspMap::new(&t_c)?;

    let internal = if scenario.noise.internal_force_amplitude > 0.0 && n > 1 {
        let mut rng = rng_stream(seed, STREAM_INTERNAL);
        let raw = DVector::from_fn(6 * n, |_, _| StandardNormal.sample(&mut rng));
        let c = map.internal_component(&raw);
        let norm = c.norm();
        (norm > 1e-12).then(|| c * (scenario.noise.internal_force_amplitude / norm))
    } else {
        None
    };

    let mut total_wrench = Vec::with_capacity(world.len());
    let mut ref_wrenches: Vec<Vec<Wrench>> = vec![Vec::with_capacity(world.len()); n];
    for k in 0..world.len() {
        let total = newton_euler_total_wrench(&body, &world[k].rotation, &motion.twists[k], &motion.rates[k], &gravity);
        let shares = map.distribute(&total, internal.as_ref())?;
        for (i, w) in shares.into_iter().enumerate() {
            ref_wrenches[i].push(w);
        }
        total_wrench.push(total);
    }

    let mut reference = Vec::with_capacity(n);
    for (i, wrenches) in ref_wrenches.into_iter().enumerate() {
        let (poses, twists, rates) = rigid_attach(&world, &motion.twists, &motion.rates, &t_c[i], Frame::grasp(i + 1));
        reference.push(ReferenceStreams { poses, twists, rates, wrenches });
    }

    let noise = &scenario.noise;
    let mut pose_rng = rng_stream(seed, STREAM_POSE);
    let mut wrench_rng = rng_stream(seed, STREAM_WRENCH);
    let raw = reference
        .iter()
        .map(|r| {
            let poses = r.poses.iter().map(|t| corrupt_pose(t, noise, &mut pose_rng)).collect();
            let bias = gaussian3(&mut wrench_rng, noise.wrench_force_bias_sigma);
            let wrenches = r
                .wrenches
                .iter()
                .map(|w| {
                    let m = w.moment + gaussian3(&mut wrench_rng, noise.wrench_moment_sigma);
                    let f = w.force + bias + gaussian3(&mut wrench_rng, noise.wrench_force_sigma);
                    Wrench::new(m, f, w.frame)
                })
                .collect();
            RobotStreams { poses, wrenches }
        })
        .collect();

    let payload = PayloadTrajectory { poses: world, ..motion };
    Ok(GroundTruthDataset {
        scenario: scenario.clone(),
        truth,
        assembled,
        times: payload.times.clone(),
        raw,
        reference,
        payload,
        total_wrench,
    })
}
