//! Per-trial errors, aggregate statistics and their renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::{GroundTruthBlock, PoseRecord};
use super::run::TrialOutcome;
use super::PipelineError;
use crate::geom::rotation_error_deg;
use crate::kin_est::RefinementInfo;
use crate::sim::{NoiseConfig, PayloadModel};
use crate::Transform;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub i: usize,
    pub j: usize,
    /// `T̂_ij`.
    pub estimate: PoseRecord,
    pub rotation_error_deg: Option<f64>,
    pub position_error: Option<f64>,
    /// `‖p̂ − p‖ / ‖p‖` in percent.
    pub position_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsReport {
    pub pairs: Vec<PairReport>,
    pub refinement: Option<RefinementInfo>,
    /// Smallest rotation and position singular values over all pairwise fits.
    pub min_rotation_singular_value: f64,
    pub min_position_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticsReport {
    pub holds: usize,
    pub mass: f64,
    pub mass_error: Option<f64>,
    pub mass_error_pct: Option<f64>,
    /// `p̂_sc`.
    pub com: [f64; 3],
    pub com_error: Option<f64>,
    pub com_error_pct: Option<f64>,
    pub mass_residual: f64,
    pub horizontal_residual: f64,
    pub com_residual: f64,
    pub com_singular_values: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaReport {
    pub samples: usize,
    /// `𝓘̂_b` as `(xx, xy, xz, yy, yz, zz)`.
    pub inertia_b: [f64; 6],
    /// Ascending principal moments, absent when discarded.
    pub moments: Option<[f64; 3]>,
    pub moment_errors: Option<[f64; 3]>,
    pub moment_errors_pct: Option<[f64; 3]>,
    /// `R_sc` as a quaternion.
    pub principal_axes: Option<[f64; 4]>,
    pub psd_projected: bool,
    pub negative_eigenvalue_magnitude: f64,
    pub degenerate: bool,
    pub residual_norm: f64,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seeds: Option<[u64; 3]>,
    pub kinematics: Option<KinematicsReport>,
    pub statics: Option<StaticsReport>,
    pub inertia: Option<InertiaReport>,
    pub failures: Vec<StageFailure>,
}

impl TrialResult {
    pub fn failed(trial: usize, failure: StageFailure) -> Self {
        TrialResult { trial, seeds: None, kinematics: None, statics: None, inertia: None, failures: vec![failure] }
    }
}

/// Mean and sample standard deviation of one error metric over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub unit: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_pct: Option<f64>,
    pub std_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub robots: usize,
    pub truth: Option<GroundTruthBlock>,
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub schema: u32,
    pub config: RunConfig,
    pub noise: Option<NoiseConfig>,
    pub scenarios: Vec<ScenarioReport>,
}

/// Mean and sample standard deviation (`n − 1`; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Pairs reported per trial: around the cycle `1→2→…→N→1`.
pub fn reported_pairs(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(1, 2)],
        _ => (1..=n).map(|i| (i, i % n + 1)).collect(),
    }
}

fn pct(err: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * err / reference.abs())
}

fn finite(xs: impl IntoIterator<Item = f64>) -> bool {
    xs.into_iter().all(f64::is_finite)
}

/// Converts a trial outcome into errors against `truth`, when known.
pub fn trial_result(
    trial: usize,
    seeds: Option<[u64; 3]>,
    outcome: &TrialOutcome,
    truth: Option<&PayloadModel>,
    reference: usize,
) -> TrialResult {
    let mut failures = outcome.failures.clone();
    let nonfinite = |stage: &str| StageFailure { stage: stage.into(), message: "estimate is not finite".into() };

    let kinematics = outcome.kinematics.as_ref().and_then(|k| {
        let frames: Vec<usize> = k.graph.frames().collect();
        let pairs: Vec<PairReport> = reported_pairs(frames.len())
            .into_iter()
            .map(|(i, j)| {
                let est = k.graph.relative(i, j);
                let (rot, pos, pos_pct) = match truth {
                    Some(t) if i <= t.robot_count() && j <= t.robot_count() => {
                        let tr = t.relative(i, j);
                        let e = (est.translation - tr.translation).norm();
                        (
                            Some(rotation_error_deg(&tr.rotation, &est.rotation)),
                            Some(e),
                            pct(e, tr.translation.norm()),
                        )
                    }
                    _ => (None, None, None),
                };
                PairReport {
                    i,
                    j,
                    estimate: PoseRecord::from_transform(&est),
                    rotation_error_deg: rot,
                    position_error: pos,
                    position_error_pct: pos_pct,
                }
            })
            .collect();
        let ok = pairs.iter().all(|p| finite(p.estimate.q.into_iter().chain(p.estimate.p)));
        if !ok {
            failures.push(nonfinite("kinematics"));
            return None;
        }
        let min = |f: &dyn Fn(&crate::PairwiseEstimate) -> f64| k.pairwise.iter().map(f).fold(f64::INFINITY, f64::min);
        let min_rot = min(&|p| p.rotation_singular_values[2]);
        let min_pos = min(&|p| p.position_singular_values[2]);
        Some(KinematicsReport {
            pairs,
            refinement: k.graph.refinement.clone(),
            min_rotation_singular_value: if min_rot.is_finite() { min_rot } else { 0.0 },
            min_position_singular_value: if min_pos.is_finite() { min_pos } else { 0.0 },
        })
    });

    // Ground truth re-expressed with the reference grasp as `{s}`.
    let t_sc: Option<Transform> = truth.filter(|t| reference <= t.robot_count()).map(|t| t.t_ci(reference).inverse());

    let statics = outcome.statics.as_ref().and_then(|s| {
        let com = s.com.position;
        if !finite([s.mass.mass, com.x, com.y, com.z]) {
            failures.push(nonfinite("statics"));
            return None;
        }
        let mass_err = truth.map(|t| (s.mass.mass - t.mass).abs());
        let com_err = t_sc.map(|t| (com - t.translation).norm());
        Some(StaticsReport {
            holds: s.samples.len(),
            mass: s.mass.mass,
            mass_error: mass_err,
            mass_error_pct: truth.and_then(|t| pct(mass_err.unwrap(), t.mass)),
            com: com.into(),
            com_error: com_err,
            com_error_pct: t_sc.and_then(|t| pct(com_err.unwrap(), t.translation.norm())),
            mass_residual: s.mass.residual_norm,
            horizontal_residual: s.mass.horizontal_residual,
            com_residual: s.com.residual_norm,
            com_singular_values: s.com.singular_values,
        })
    });

    let inertia = outcome.inertia.as_ref().and_then(|i| {
        let m = &i.estimate.inertia;
        if !finite(m.iter().copied()) {
            failures.push(nonfinite("inertia"));
            return None;
        }
        let truth_sorted = truth.map(|t| {
            let mut v: [f64; 3] = t.principal_inertia.into();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        });
        let moments: Option<[f64; 3]> = i.principal.map(|p| p.moments.into());
        let errors = moments.zip(truth_sorted).map(|(m, t)| std::array::from_fn(|k| (m[k] - t[k]).abs()));
        let errors_pct = errors.zip(truth_sorted).map(|(e, t): ([f64; 3], [f64; 3])| std::array::from_fn(|k| 100.0 * e[k] / t[k]));
        Some(InertiaReport {
            samples: i.estimate.sample_count,
            inertia_b: crate::inertia_est::InertiaVector::from_matrix(m).0,
            moments,
            moment_errors: errors,
            moment_errors_pct: errors_pct,
            principal_axes: i.principal.map(|p| p.r_bc.to_quaternion()),
            psd_projected: i.principal.map(|p| p.psd_projected).unwrap_or(true),
            negative_eigenvalue_magnitude: i.principal.map(|p| p.negative_eigenvalue_magnitude).unwrap_or(0.0),
            degenerate: i.principal.map(|p| p.degenerate).unwrap_or(false),
            residual_norm: i.estimate.residual_norm,
            singular_values: i.estimate.singular_values.clone(),
        })
    });

    TrialResult { trial, seeds, kinematics, statics, inertia, failures }
}

fn row(parameter: String, unit: &str, values: &[(f64, Option<f64>)]) -> Option<SummaryRow> {
    if values.is_empty() {
        return None;
    }
    let abs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let (mean, std) = mean_std(&abs);
    let rel: Vec<f64> = values.iter().filter_map(|v| v.1).collect();
    let (mean_pct, std_pct) = if rel.len() == values.len() {
        let (m, s) = mean_std(&rel);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Some(SummaryRow { parameter, unit: unit.into(), count: values.len(), mean, std, mean_pct, std_pct })
}

/// Aggregates per-trial errors in the layout of the reference tables.
pub fn summarize(robots: usize, trials: &[TrialResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (i, j) in reported_pairs(robots) {
        let pairs: Vec<&PairReport> = trials
            .iter()
            .filter_map(|t| t.kinematics.as_ref())
            .flat_map(|k| k.pairs.iter().filter(|p| p.i == i && p.j == j))
            .collect();
        let rot: Vec<(f64, Option<f64>)> = pairs.iter().filter_map(|p| p.rotation_error_deg.map(|e| (e, None))).collect();
        let pos: Vec<(f64, Option<f64>)> = pairs.iter().filter_map(|p| p.position_error.map(|e| (e, p.position_error_pct))).collect();
        rows.extend(row(format!("T{i}{j} rotation"), "deg", &rot));
        rows.extend(row(format!("T{i}{j} position"), "m", &pos));
    }
    let statics: Vec<&StaticsReport> = trials.iter().filter_map(|t| t.statics.as_ref()).collect();
    let mass: Vec<_> = statics.iter().filter_map(|s| s.mass_error.map(|e| (e, s.mass_error_pct))).collect();
    let com: Vec<_> = statics.iter().filter_map(|s| s.com_error.map(|e| (e, s.com_error_pct))).collect();
    rows.extend(row("mass".into(), "kg", &mass));
    rows.extend(row("CoM".into(), "m", &com));
    for (k, axis) in ["I_xx", "I_yy", "I_zz"].iter().enumerate() {
        let v: Vec<_> = trials
            .iter()
            .filter_map(|t| t.inertia.as_ref())
            .filter_map(|i| i.moment_errors.map(|e| (e[k], i.moment_errors_pct.map(|p| p[k]))))
            .collect();
        rows.extend(row(axis.to_string(), "kg·m²", &v));
    }
    rows
}

impl ScenarioReport {
    pub fn new(name: String, robots: usize, truth: Option<&PayloadModel>, trials: Vec<TrialResult>) -> Self {
        let summary = summarize(robots, &trials);
        ScenarioReport { name, robots, truth: truth.map(GroundTruthBlock::from_model), trials, summary }
    }

    pub fn row(&self, parameter: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.parameter == parameter)
    }
}

impl EstimationReport {
    pub fn new(config: RunConfig, noise: Option<NoiseConfig>, scenarios: Vec<ScenarioReport>) -> Self {
        EstimationReport { schema: REPORT_SCHEMA, config, noise, scenarios }
    }

    pub fn has_failures(&self) -> bool {
        self.scenarios.iter().flat_map(|s| &s.trials).any(|t| !t.failures.is_empty())
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::InvalidInput(format!("report: {e}")))
    }

    /// Plain-text tables: mean and standard deviation of each error.
    pub fn to_human(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            let name = if s.name.is_empty() { "(unnamed)" } else { s.name.as_str() };
            let _ = writeln!(out, "Configuration {name}: {} robots, {} trial(s)", s.robots, s.trials.len());
            if s.summary.is_empty() {
                let _ = writeln!(out, "  no error metrics (ground truth unknown or all stages failed)");
            } else {
                let _ = writeln!(out, "  {:<16} {:>7} {:>12} {:>12} {:>9} {:>9}", "parameter", "unit", "mean", "std", "mean %", "std %");
                for r in &s.summary {
                    let p = |v: Option<f64>| v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        out,
                        "  {:<16} {:>7} {:>12.3e} {:>12.3e} {:>9} {:>9}",
                        r.parameter,
                        r.unit,
                        r.mean,
                        r.std,
                        p(r.mean_pct),
                        p(r.std_pct)
                    );
                }
            }
            if s.trials.len() == 1 {
                let t = &s.trials[0];
                if let Some(st) = &t.statics {
                    let _ = writeln!(
                        out,
                        "  mass {:.6} kg, CoM ({:.6}, {:.6}, {:.6}) m from {} hold(s)",
                        st.mass, st.com[0], st.com[1], st.com[2], st.holds
                    );
                }
                if let Some(m) = t.inertia.as_ref().and_then(|i| i.moments) {
                    let _ = writeln!(out, "  principal moments ({:.6}, {:.6}, {:.6}) kg·m²", m[0], m[1], m[2]);
                }
            }
            for t in &s.trials {
                for f in &t.failures {
                    let _ = writeln!(out, "  trial {}: {} stage failed: {}", t.trial, f.stage, f.message);
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i: usize, j: usize, rot: f64, pos: f64, pos_pct: f64) -> PairReport {
        PairReport {
            i,
            j,
            estimate: PoseRecord { q: [1.0, 0.0, 0.0, 0.0], p: [0.0; 3] },
            rotation_error_deg: Some(rot),
            position_error: Some(pos),
            position_error_pct: Some(pos_pct),
        }
    }

    fn trial(k: usize, rot: f64, mass_err: f64) -> TrialResult {
        TrialResult {
            trial: k,
            seeds: None,
            kinematics: Some(KinematicsReport {
                pairs: vec![pair(1, 2, rot, 0.01 * rot, rot)],
                refinement: None,
                min_rotation_singular_value: 1.0,
                min_position_singular_value: 1.0,
            }),
            statics: Some(StaticsReport {
                holds: 6,
                mass: 10.0 + mass_err,
                mass_error: Some(mass_err),
                mass_error_pct: Some(10.0 * mass_err),
                com: [0.0; 3],
                com_error: Some(0.0),
                com_error_pct: Some(0.0),
                mass_residual: 0.0,
                horizontal_residual: 0.0,
                com_residual: 0.0,
                com_singular_values: [1.0; 3],
            }),
            inertia: None,
            failures: Vec::new(),
        }
    }

    #[test]
    fn statistics_match_hand_computation() {
        let rots = [1.0, 2.5, 0.5, 3.0, 1.25, 2.0];
        let masses = [0.1, 0.05, 0.2, 0.15, 0.0, 0.12];
        let trials: Vec<_> = (0..6).map(|k| trial(k, rots[k], masses[k])).collect();
        let report = ScenarioReport::new("a".into(), 2, None, trials);
        let r = report.row("T12 rotation").unwrap();
        let mean = rots.iter().sum::<f64>() / 6.0;
        let var = rots.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((r.mean - mean).abs() < 1e-12);
        assert!((r.std - var.sqrt()).abs() < 1e-12);
        assert_eq!(r.count, 6);
        assert_eq!(r.mean_pct, None);
        let m = report.row("mass").unwrap();
        let mm = masses.iter().sum::<f64>() / 6.0;
        assert!((m.mean - mm).abs() < 1e-12);
        assert!((m.mean_pct.unwrap() - 10.0 * mm).abs() < 1e-12);
    }

    #[test]
    fn one_pair_gives_one_rotation_and_one_position_row() {
        let report = ScenarioReport::new("x".into(), 2, None, vec![trial(0, 1.0, 0.1)]);
        assert_eq!(report.summary.iter().filter(|r| r.parameter.contains("rotation")).count(), 1);
        assert_eq!(report.summary.iter().filter(|r| r.parameter.contains("position")).count(), 1);
        assert_eq!(report.row("T12 rotation").unwrap().std, 0.0);
    }

    #[test]
    fn json_round_trips() {
        let trials: Vec<_> = (0..3).map(|k| trial(k, 0.1 + k as f64 / 3.0, 1.0 / 7.0)).collect();
        let mut failed = TrialResult::failed(3, StageFailure { stage: "statics".into(), message: "no samples".into() });
        failed.seeds = Some([1, u64::MAX, 3]);
        let mut all = trials;
        all.push(failed);
        let r = EstimationReport::new(RunConfig::default(), Some(NoiseConfig::none()), vec![ScenarioReport::new("a".into(), 2, None, all)]);
        let back = EstimationReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.has_failures());
        let text = r.to_human();
        assert!(text.contains("T12 rotation"));
        assert!(text.contains("statics stage failed"));
    }

    #[test]
    fn cycle_pairs() {
        assert_eq!(reported_pairs(3), vec![(1, 2), (2, 3), (3, 1)]);
        assert_eq!(reported_pairs(2), vec![(1, 2)]);
        assert!(reported_pairs(1).is_empty());
    }
}
