//! Relative grasp transforms from twist data alone.
//!
//! For grasps `{i}` and `{j}` on one rigid body, `V_i = [Ad_{T_ij}]·V_j` at
//! every instant. The rotation `R_ij` is the Wahba/Kabsch fit of the angular
//! velocities; `p_ij` then follows from a linear least-squares problem in
//! the linear velocities. Pairwise results are chained into a
//! [`GraspGraph`] rooted at a reference grasp and optionally refined
//! jointly over all pairs.

mod graph;
mod pairwise;
mod refine;

use nalgebra::{Matrix3xX, Vector3};
use thiserror::Error;

use crate::geom::Twist;
use crate::Real;

pub use graph::{chain_estimates, GraspGraph};
pub use pairwise::{estimate_pairwise, estimate_position, estimate_rotation, PairwiseEstimate, PositionFit, RotationFit};
pub use refine::{loop_closure_cost, refine_loop_closure, RefinementInfo, RefinementWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("twist batches disagree in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("insufficient excitation for the {stage} fit: direction {direction:?} is unobservable (singular values {singular_values:?})")]
    InsufficientExcitation { stage: &'static str, direction: [f64; 3], singular_values: Vec<f64> },
    #[error("grasp frames {unreachable:?} are not connected to reference frame {reference}")]
    Disconnected { reference: usize, unreachable: Vec<usize> },
    #[error("non-finite value in input")]
    NonFinite,
}

/// Synchronized twists of one grasp frame, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistBatch<T: Real> {
    pub robot: usize,
    pub times: Vec<f64>,
    pub angular: Matrix3xX<T>,
    pub linear: Matrix3xX<T>,
}

impl<T: Real> TwistBatch<T> {
    pub fn new(robot: usize, times: Vec<f64>, angular: Matrix3xX<T>, linear: Matrix3xX<T>) -> Result<Self, KinError> {
        if angular.ncols() != linear.ncols() {
            return Err(KinError::LengthMismatch { left: angular.ncols(), right: linear.ncols() });
        }
        if times.len() != angular.ncols() {
            return Err(KinError::LengthMismatch { left: times.len(), right: angular.ncols() });
        }
        if !angular.iter().chain(linear.iter()).all(|x| x.is_finite()) {
            return Err(KinError::NonFinite);
        }
        Ok(TwistBatch { robot, times, angular, linear })
    }

    pub fn from_twists(robot: usize, times: Vec<f64>, twists: &[Twist<T>]) -> Result<Self, KinError> {
        let angular = Matrix3xX::from_iterator(twists.len(), twists.iter().flat_map(|v| v.angular.iter().copied().collect::<Vec<_>>()));
        let linear = Matrix3xX::from_iterator(twists.len(), twists.iter().flat_map(|v| v.linear.iter().copied().collect::<Vec<_>>()));
        Self::new(robot, times, angular, linear)
    }

    pub fn len(&self) -> usize {
        self.angular.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn twist(&self, q: usize) -> (Vector3<T>, Vector3<T>) {
        (self.angular.column(q).into_owned(), self.linear.column(q).into_owned())
    }
}

fn to_f64_array<T: Real>(v: &Vector3<T>) -> [f64; 3] {
    [v.x.as_f64(), v.y.as_f64(), v.z.as_f64()]
}
