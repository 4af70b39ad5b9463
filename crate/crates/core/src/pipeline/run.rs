//! Stage orchestration: kinematics, then statics, then inertia.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{experiment_scenario, Experiment, RunConfig};
use super::dataset::DatasetFile;
use super::preprocess::{processed_view, Processed};
use super::report::{self, EstimationReport, ScenarioReport, StageFailure, TrialResult};
use super::PipelineError;
use crate::inertia_est::{
    estimate_inertia, finalize_inertia, moment_rhs, to_body_angular, InertiaError, InertiaEstimate, InertiaSample,
};
use crate::kin_est::{chain_estimates, estimate_pairwise, refine_loop_closure, KinError, RefinementWeights};
use crate::sim::{synthesize_dataset, NoiseConfig, ScenarioConfig};
use crate::statics_est::{detect_static_windows, estimate_com, estimate_mass, ComEstimate, MassEstimate, StaticsError};
use crate::{GraspGraph, PairwiseEstimate, PrincipalInertia, Rotation, StaticSample, TwistBatch};

/// Which estimators to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub kinematics: bool,
    pub statics: bool,
    pub inertia: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { kinematics: true, statics: true, inertia: true };
}

impl FromStr for Stages {
    type Err = String;
    /// Comma-separated subset of `kin`, `statics`, `inertia`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Stages { kinematics: false, statics: false, inertia: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "kin" | "kinematics" => out.kinematics = true,
                "statics" => out.statics = true,
                "inertia" => out.inertia = true,
                other => return Err(format!("unknown stage {other:?} (expected kin, statics, inertia)")),
            }
        }
        if !(out.kinematics || out.statics || out.inertia) {
            return Err("no stages selected".into());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct KinematicsOutcome {
    pub pairwise: Vec<PairwiseEstimate>,
    pub graph: GraspGraph,
}

/// Twist batches of every robot. Only twists enter: the kinematics stage
/// never sees wrenches or accelerations.
pub fn twist_batches(p: &Processed) -> Result<Vec<TwistBatch>, KinError> {
    p.robots.iter().map(|r| TwistBatch::from_twists(r.id, p.times.clone(), &r.twists)).collect()
}

/// Pairwise fits for every pair, chained from `reference` and optionally
/// refined jointly.
pub fn run_kinematics(batches: &[TwistBatch], reference: usize, refine: bool) -> Result<KinematicsOutcome, KinError> {
    let mut pairwise = Vec::new();
    for a in 0..batches.len() {
        for b in a + 1..batches.len() {
            pairwise.push(estimate_pairwise(&batches[a], &batches[b])?);
        }
    }
    let frames: Vec<usize> = batches.iter().map(|b| b.robot).collect();
    let mut graph = chain_estimates(&pairwise, reference, &frames)?;
    if refine && batches.len() > 1 {
        graph = refine_loop_closure(&graph, batches, &RefinementWeights::default());
    }
    Ok(KinematicsOutcome { pairwise, graph })
}

/// Averaged static holds. Windows are detected on the estimator wrenches,
/// shrunk by the configured margin, then averaged over the raw wrenches.
pub fn static_samples(p: &Processed, home_reference: &Rotation, reference: usize, cfg: &RunConfig) -> Vec<StaticSample> {
    let forces: Vec<Vec<Vector3<f64>>> = p.robots.iter().map(|r| r.wrenches.iter().map(|w| w.force).collect()).collect();
    let windows = detect_static_windows(&forces, p.sample_rate, cfg.static_tolerance, cfg.static_duration);
    let margin = (cfg.static_margin * p.sample_rate).round() as usize;
    let Some(s) = p.robot(reference) else { return Vec::new() };
    windows
        .into_iter()
        .filter(|&(a, b)| b > a + 2 * margin)
        .enumerate()
        .map(|(hold, (a, b))| {
            let (a, b) = (a + margin, b - margin);
            let count = (b - a) as f64;
            let wrenches = p
                .robots
                .iter()
                .map(|r| {
                    let (m, f) = r.raw_wrenches[a..b]
                        .iter()
                        .fold((Vector3::zeros(), Vector3::zeros()), |(m, f), w| (m + w.moment, f + w.force));
                    (r.id, crate::Wrench::new(m / count, f / count, r.raw_wrenches[a].frame))
                })
                .collect();
            let sum = s.poses[a..b].iter().fold(Matrix3::zeros(), |acc, t| acc + t.rotation.matrix());
            let r_ws = *home_reference * Rotation::project(&sum);
            StaticSample { hold, r_ws, wrenches, window: (p.start + a, p.start + b) }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StaticsOutcome {
    pub samples: Vec<StaticSample>,
    pub mass: MassEstimate<f64>,
    pub com: ComEstimate<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticsFailure {
    Estimator(StaticsError),
    InvalidMass(f64),
}

impl std::fmt::Display for StaticsFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StaticsFailure::Estimator(e) => write!(f, "{e}"),
            StaticsFailure::InvalidMass(m) => write!(f, "mass estimate {m} kg is not positive"),
        }
    }
}

pub fn run_statics(
    samples: Vec<StaticSample>,
    graph: &GraspGraph,
    gravity: &Vector3<f64>,
) -> Result<StaticsOutcome, StaticsFailure> {
    let mass = estimate_mass(&samples, graph, gravity).map_err(StaticsFailure::Estimator)?;
    if !mass.valid {
        return Err(StaticsFailure::InvalidMass(mass.mass));
    }
    let com = estimate_com(&samples, mass.mass, graph, gravity).map_err(StaticsFailure::Estimator)?;
    Ok(StaticsOutcome { samples, mass, com })
}

/// Regressor samples: angular motion of the reference grasp re-expressed in
/// `{b}` and the moment about the estimated center of mass.
pub fn inertia_samples(
    p: &Processed,
    graph: &GraspGraph,
    p_sc: &Vector3<f64>,
    reference: usize,
) -> Result<Vec<InertiaSample<f64>>, InertiaError> {
    let s = p.robot(reference).ok_or(InertiaError::UnknownRobot { sample: 0, robot: reference })?;
    (0..p.len())
        .map(|k| {
            let wrenches = p.robots.iter().map(|r| (r.id, r.wrenches[k])).collect();
            let moment = moment_rhs(&wrenches, graph, p_sc).map_err(|robot| InertiaError::UnknownRobot { sample: k, robot })?;
            let omega = to_body_angular(graph, reference, &s.twists[k].angular)
                .ok_or(InertiaError::UnknownRobot { sample: k, robot: reference })?;
            let alpha = to_body_angular(graph, reference, &s.rates[k].angular)
                .ok_or(InertiaError::UnknownRobot { sample: k, robot: reference })?;
            Ok(InertiaSample { omega, alpha, moment })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct InertiaOutcome {
    pub estimate: InertiaEstimate<f64>,
    /// `None` when the estimate was discarded for a negative eigenvalue.
    pub principal: Option<PrincipalInertia>,
}

pub fn run_inertia(samples: &[InertiaSample<f64>], cfg: &RunConfig) -> Result<InertiaOutcome, InertiaError> {
    let estimate = estimate_inertia(samples)?;
    let principal = finalize_inertia(&estimate.inertia, cfg.psd_policy);
    Ok(InertiaOutcome { estimate, principal })
}

/// Recordings for one trial. Stages read only their own recording.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub kinematics: Arc<DatasetFile>,
    pub statics: Arc<DatasetFile>,
    pub inertia: Arc<DatasetFile>,
    pub seeds: Option<[u64; 3]>,
}

/// Everything a trial produced, for callers that need more than the report.
#[derive(Debug, Clone, Default)]
pub struct TrialOutcome {
    pub kinematics: Option<KinematicsOutcome>,
    pub statics: Option<StaticsOutcome>,
    pub inertia: Option<InertiaOutcome>,
    pub failures: Vec<StageFailure>,
}

fn fail(stage: &str, message: impl ToString) -> StageFailure {
    StageFailure { stage: stage.to_string(), message: message.to_string() }
}

/// Runs the selected stages in order, each feeding the next. A failing
/// stage is recorded and skips the stages that depend on it.
pub fn estimate_trial(inputs: &TrialInputs, cfg: &RunConfig, stages: Stages) -> TrialOutcome {
    let mut out = TrialOutcome::default();
    let reference = cfg.reference_robot;

    if stages.kinematics {
        match processed_view(&inputs.kinematics, cfg)
            .map_err(|e| e.to_string())
            .and_then(|p| twist_batches(&p).map_err(|e| e.to_string()))
            .and_then(|b| run_kinematics(&b, reference, cfg.loop_refinement).map_err(|e| e.to_string()))
        {
            Ok(k) => out.kinematics = Some(k),
            Err(e) => out.failures.push(fail("kinematics", e)),
        }
    }

    if stages.statics {
        match &out.kinematics {
            None => out.failures.push(fail("statics", "requires the kinematics stage")),
            Some(kin) => {
                let file = &inputs.statics;
                let result = processed_view(file, cfg).map_err(|e| e.to_string()).and_then(|p| {
                    if reference > file.robot_count() {
                        return Err(format!("reference robot {reference} not in dataset"));
                    }
                    let samples = static_samples(&p, &file.home_orientation(reference), reference, cfg);
                    run_statics(samples, &kin.graph, &Vector3::from(file.header.gravity)).map_err(|e| e.to_string())
                });
                match result {
                    Ok(s) => out.statics = Some(s),
                    Err(e) => out.failures.push(fail("statics", e)),
                }
            }
        }
    }

    if stages.inertia {
        match (&out.kinematics, &out.statics) {
            (Some(kin), Some(st)) => {
                let result = processed_view(&inputs.inertia, cfg)
                    .map_err(|e| e.to_string())
                    .and_then(|p| inertia_samples(&p, &kin.graph, &st.com.position, reference).map_err(|e| e.to_string()))
                    .and_then(|s| run_inertia(&s, cfg).map_err(|e| e.to_string()));
                match result {
                    Ok(i) => {
                        if i.principal.is_none() {
                            out.failures.push(fail("inertia", "estimate has a negative eigenvalue and was discarded"));
                        }
                        out.inertia = Some(i);
                    }
                    Err(e) => out.failures.push(fail("inertia", e)),
                }
            }
            _ => out.failures.push(fail("inertia", "requires the kinematics and statics stages")),
        }
    }
    out
}

/// Seeds for the three recordings of `trial`.
pub fn trial_seeds(run_seed: u64, trial: usize) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(trial as u64 + 1);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

/// Synthesizes the recordings of one trial. Even trials reuse the
/// kinematics recording for the inertia stage.
pub fn simulate_trial(
    base: &ScenarioConfig,
    noise: &NoiseConfig,
    trial: usize,
    run_seed: u64,
    analytic_derivatives: bool,
) -> Result<TrialInputs, PipelineError> {
    let seeds = trial_seeds(run_seed, trial);
    let mut base = base.clone();
    base.noise = *noise;
    let make = |e: Experiment, seed: u64| -> Result<Arc<DatasetFile>, PipelineError> {
        let s = experiment_scenario(&base, e, trial, seed);
        let d = synthesize_dataset(&s)?;
        Ok(Arc::new(DatasetFile::from_ground_truth(&d, e.name(), analytic_derivatives)))
    };
    let kinematics = make(Experiment::Kinematics, seeds[0])?;
    let statics = make(Experiment::Statics, seeds[1])?;
    let inertia = if trial.is_multiple_of(2) { kinematics.clone() } else { make(Experiment::Inertia, seeds[2])? };
    Ok(TrialInputs { kinematics, statics, inertia, seeds: Some(seeds) })
}

/// Simulates and estimates `cfg.trials` trials of one scenario in parallel.
pub fn run_scenario(base: &ScenarioConfig, noise: &NoiseConfig, cfg: &RunConfig, stages: Stages) -> Result<ScenarioReport, PipelineError> {
    cfg.validate()?;
    let truth = base.validate()?;
    let analytic = cfg.derivative_source == super::config::DerivativeSource::Dataset;
    let trials: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| match simulate_trial(base, noise, t, cfg.seed, analytic) {
            Ok(inputs) => {
                let outcome = estimate_trial(&inputs, cfg, stages);
                report::trial_result(t, inputs.seeds, &outcome, Some(&truth), cfg.reference_robot)
            }
            Err(e) => TrialResult::failed(t, fail("simulate", e)),
        })
        .collect();
    Ok(ScenarioReport::new(base.name.clone(), truth.robot_count(), Some(&truth), trials))
}

/// Full pipeline over several scenarios with one noise profile.
pub fn run_full_pipeline(
    scenarios: &[ScenarioConfig],
    noise: &NoiseConfig,
    cfg: &RunConfig,
    stages: Stages,
) -> Result<EstimationReport, PipelineError> {
    let reports = scenarios.iter().map(|s| run_scenario(s, noise, cfg, stages)).collect::<Result<Vec<_>, _>>()?;
    Ok(EstimationReport::new(cfg.clone(), Some(*noise), reports))
}

/// Estimation on recorded datasets, treated as a single trial.
pub fn run_datasets(inputs: &TrialInputs, cfg: &RunConfig, stages: Stages) -> Result<EstimationReport, PipelineError> {
    cfg.validate()?;
    let truth = inputs.kinematics.ground_truth();
    let outcome = estimate_trial(inputs, cfg, stages);
    let trial = report::trial_result(0, inputs.seeds, &outcome, truth.as_ref(), cfg.reference_robot);
    let name = inputs.kinematics.header.scenario_name.clone();
    let scenario = ScenarioReport::new(name, inputs.kinematics.robot_count(), truth.as_ref(), vec![trial]);
    Ok(EstimationReport::new(cfg.clone(), None, vec![scenario]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists_parse() {
        assert_eq!("kin,statics,inertia".parse::<Stages>().unwrap(), Stages::ALL);
        let k: Stages = "kin".parse().unwrap();
        assert!(k.kinematics && !k.statics && !k.inertia);
        assert!("kin,mass".parse::<Stages>().is_err());
        assert!("".parse::<Stages>().is_err());
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a = trial_seeds(3, 0);
        assert_eq!(a, trial_seeds(3, 0));
        assert_ne!(a, trial_seeds(3, 1));
        assert_ne!(a, trial_seeds(4, 0));
        assert!(a[0] != a[1] && a[1] != a[2]);
    }
}
