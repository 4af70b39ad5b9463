//! Cooperative rigid-payload estimation.
//!
//! A team of grippers rigidly attached to one rigid body records synchronized
//! poses and wrenches at their grasp frames. From that data this crate
//! estimates
//!
//! 1. the relative grasp transforms `T_ij` from twists alone ([`kin_est`]),
//! 2. the payload mass and center of mass from static holds ([`statics_est`]),
//! 3. the inertia matrix and principal axes from dynamic data ([`inertia_est`]).
//!
//! [`sim`] synthesizes ground-truth datasets, [`signal`] holds the
//! filtering/differencing chain and [`pipeline`] wires everything together
//! with file formats and reports.
//!
//! The geometry and estimation modules are generic over [`Real`] (`f32` or
//! `f64`). The aliases at the crate root fix the scalar to `f64`.

pub mod geom;
pub mod inertia_est;
pub mod kin_est;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod signal;
pub mod sim;
pub mod statics_est;

pub use scalar::Real;

pub type Rotation = geom::Rotation<f64>;
pub type Transform = geom::Transform<f64>;
pub type Twist = geom::Twist<f64>;
pub type TwistRate = geom::TwistRate<f64>;
pub type Wrench = geom::Wrench<f64>;
pub type TwistBatch = kin_est::TwistBatch<f64>;
pub type PairwiseEstimate = kin_est::PairwiseEstimate<f64>;
pub type GraspGraph = kin_est::GraspGraph<f64>;
pub type StaticSample = statics_est::StaticSample<f64>;
pub type PrincipalInertia = inertia_est::PrincipalInertia<f64>;

pub type Rotationf32 = geom::Rotation<f32>;
pub type Transformf32 = geom::Transform<f32>;
