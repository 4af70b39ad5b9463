//! Run configuration and noise profiles.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::inertia_est::PsdPolicy;
use crate::sim::{NoiseConfig, ScenarioConfig, TrajectoryConfig};

const CALIBRATED_PROFILE: &str = include_str!("../../presets/noise_calibrated.toml");

/// Source of twists and twist rates for the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// Filter the recorded poses and difference them.
    #[default]
    Differentiate,
    /// Use the derived block stored in the dataset as is.
    Dataset,
}

impl FromStr for DerivativeSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "differentiate" => Ok(Self::Differentiate),
            "dataset" => Ok(Self::Dataset),
            other => Err(format!("unknown derivative source {other:?} (expected differentiate or dataset)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Low-pass cutoff applied to poses and wrenches before differencing.
    pub filter_cutoff_hz: f64,
    pub filter_order: usize,
    /// Seconds discarded at each end after differencing.
    pub trim_seconds: f64,
    /// Peak-to-peak force tolerance of a static window (N).
    pub static_tolerance: f64,
    pub static_duration: f64,
    /// Seconds dropped at each end of a detected window before averaging.
    pub static_margin: f64,
    pub loop_refinement: bool,
    pub psd_policy: PsdPolicy,
    pub derivative_source: DerivativeSource,
    /// Grasp frame used as `{s}`.
    pub reference_robot: usize,
    pub seed: u64,
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            filter_cutoff_hz: 5.0,
            filter_order: 3,
            trim_seconds: 2.0,
            static_tolerance: 0.01,
            static_duration: 6.0,
            static_margin: 1.0,
            loop_refinement: true,
            psd_policy: PsdPolicy::Project,
            derivative_source: DerivativeSource::Differentiate,
            reference_robot: 1,
            seed: 0,
            trials: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if !(self.filter_cutoff_hz > 0.0 && self.filter_cutoff_hz.is_finite()) {
            return bad("filter cutoff must be positive");
        }
        if self.filter_order == 0 {
            return bad("filter order must be at least 1");
        }
        if !(self.trim_seconds >= 0.0) {
            return bad("trim must be non-negative");
        }
        if !(self.static_tolerance > 0.0 && self.static_duration > 0.0 && self.static_margin >= 0.0) {
            return bad("static tolerance and duration must be positive, margin non-negative");
        }
        if self.reference_robot == 0 {
            return bad("robot ids start at 1");
        }
        if self.trials == 0 {
            return bad("need at least one trial");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }
}

/// Measurement noise applied to simulated trials.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseProfile {
    None,
    /// The checked-in profile tuned against the reference error tables.
    Calibrated,
    Path(PathBuf),
}

impl FromStr for NoiseProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" => Self::None,
            "calibrated" => Self::Calibrated,
            path => Self::Path(PathBuf::from(path)),
        })
    }
}

#[derive(Deserialize)]
struct ProfileFile {
    noise: NoiseConfig,
}

/// Parses a noise profile: a `[noise]` table of [`NoiseConfig`] fields.
pub fn parse_noise_profile(text: &str) -> Result<NoiseConfig, PipelineError> {
    let p: ProfileFile = toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(format!("noise profile: {e}")))?;
    p.noise.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    Ok(p.noise)
}

impl NoiseProfile {
    pub fn resolve(&self) -> Result<NoiseConfig, PipelineError> {
        match self {
            NoiseProfile::None => Ok(NoiseConfig::none()),
            NoiseProfile::Calibrated => parse_noise_profile(CALIBRATED_PROFILE),
            NoiseProfile::Path(p) => parse_noise_profile(&read_text(p)?),
        }
    }
}

pub(crate) fn read_text(p: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))
}

/// The three recordings that make up one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Random via-point motion for the grasp kinematics.
    Kinematics,
    /// Six static holds for mass and center of mass.
    Statics,
    /// Excitation for the inertia.
    Inertia,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Kinematics, Experiment::Statics, Experiment::Inertia];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Kinematics => "kinematics",
            Experiment::Statics => "statics",
            Experiment::Inertia => "inertia",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?} (expected kinematics, statics or inertia)"))
    }
}

/// Length of the periodic inertia excitation (s).
pub const PERIODIC_DURATION: f64 = 60.0;

/// Scenario for one experiment of one trial. Even trials excite the
/// inertia with the random via-point motion, odd trials with a periodic
/// one.
pub fn experiment_scenario(base: &ScenarioConfig, experiment: Experiment, trial: usize, seed: u64) -> ScenarioConfig {
    let mut s = base.clone();
    s.seed = seed;
    s.trajectory = match experiment {
        Experiment::Kinematics => base.trajectory.clone(),
        Experiment::Statics => TrajectoryConfig::six_holds(),
        Experiment::Inertia if trial.is_multiple_of(2) => base.trajectory.clone(),
        Experiment::Inertia => TrajectoryConfig::periodic(PERIODIC_DURATION),
    };
    s
}
