//! Dataset files, preprocessing, stage orchestration and reports.
//!
//! A simulated trial consists of three recordings: random motion for the
//! grasp kinematics, six static holds for mass and center of mass, and an
//! excitation run for the inertia. Stages run in that order and each one
//! consumes the estimates of the previous ones.

pub mod config;
pub mod dataset;
pub mod preprocess;
pub mod report;
pub mod run;

use std::path::Path;

use thiserror::Error;

use crate::signal::SignalError;
use crate::sim::SimError;

pub use config::{DerivativeSource, Experiment, NoiseProfile, RunConfig};
pub use dataset::DatasetFile;
pub use preprocess::{preprocess, processed_view, Processed};
pub use report::{EstimationReport, ScenarioReport, SummaryRow, TrialResult};
pub use run::{estimate_trial, run_datasets, run_full_pipeline, run_scenario, simulate_trial, Stages, TrialInputs};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
