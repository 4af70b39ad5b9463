//! Line-delimited dataset files.
//!
//! The first line is a JSON header. Every following line is one record for
//! one robot at one timestep, ordered by timestep and then robot id.
//! Numbers use the shortest decimal form that parses back to the same
//! `f64`, so a write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::geom::Frame;
use crate::sim::{GroundTruthDataset, PayloadModel, ScenarioConfig};
use crate::{Rotation, Transform, Twist, TwistRate, Wrench};

pub const SCHEMA_VERSION: u32 = 1;

/// Unit quaternion `(w, x, y, z)` plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub q: [f64; 4],
    pub p: [f64; 3],
}

impl PoseRecord {
    pub fn from_transform(t: &Transform) -> Self {
        PoseRecord { q: t.rotation.to_quaternion(), p: t.translation.into() }
    }

    pub fn to_transform(&self) -> Transform {
        let [w, x, y, z] = self.q;
        Transform::new(Rotation::from_quaternion(w, x, y, z), self.p.into())
    }

    fn quaternion_norm_error(&self) -> f64 {
        (self.q.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBlock {
    pub mass: f64,
    /// `T_1c`, with `{c}` aligned to the principal axes.
    pub com: PoseRecord,
    pub principal_inertia: [f64; 3],
    /// `T_1i` for every robot, starting with the identity.
    pub grasps: Vec<PoseRecord>,
}

impl GroundTruthBlock {
    pub fn from_model(m: &PayloadModel) -> Self {
        GroundTruthBlock {
            mass: m.mass,
            com: PoseRecord::from_transform(&m.t_1c),
            principal_inertia: m.principal_inertia.into(),
            grasps: m.grasp_transforms.iter().map(PoseRecord::from_transform).collect(),
        }
    }

    pub fn to_model(&self) -> PayloadModel {
        PayloadModel {
            mass: self.mass,
            t_1c: self.com.to_transform(),
            principal_inertia: self.principal_inertia.into(),
            grasp_transforms: self.grasps.iter().map(PoseRecord::to_transform).collect(),
        }
    }
}

/// Where the twists and twist rates of a derived block came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedSource {
    /// Exact derivatives written by the simulator.
    Analytic,
    /// Filtered and differenced from the recorded poses.
    Differentiated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedInfo {
    pub source: DerivedSource,
    /// Index of the first raw sample covered by the block.
    pub start: usize,
    pub len: usize,
    pub cutoff_hz: Option<f64>,
    pub filter_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: u32,
    pub robots: usize,
    pub sample_rate: f64,
    pub samples: usize,
    /// SHA-256 of the generating scenario, empty for recorded data.
    pub scenario_hash: String,
    #[serde(default)]
    pub scenario_name: String,
    #[serde(default)]
    pub experiment: String,
    pub gravity: [f64; 3],
    /// `R_{w i0}`: world orientation of each robot's home frame.
    pub home_orientations: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    t: f64,
    robot: usize,
    q: [f64; 4],
    p: [f64; 3],
    m: [f64; 3],
    f: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    twist: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<[f64; 6]>,
    /// Wrench as used by the estimators (filtered when differentiated).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wrench: Option<[f64; 6]>,
}

/// Raw measurements of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSeries {
    pub poses: Vec<PoseRecord>,
    /// `(m, f)` in the grasp frame.
    pub wrenches: Vec<[f64; 6]>,
}

/// Derivatives of one robot over `DerivedInfo::start ..+ len`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedSeries {
    pub twists: Vec<[f64; 6]>,
    pub rates: Vec<[f64; 6]>,
    pub wrenches: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub times: Vec<f64>,
    pub robots: Vec<RobotSeries>,
    pub derived: Option<Vec<DerivedSeries>>,
}

fn six(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> [f64; 6] {
    [a.x, a.y, a.z, b.x, b.y, b.z]
}

pub fn split6(v: &[f64; 6]) -> (nalgebra::Vector3<f64>, nalgebra::Vector3<f64>) {
    (nalgebra::Vector3::new(v[0], v[1], v[2]), nalgebra::Vector3::new(v[3], v[4], v[5]))
}

/// SHA-256 of the scenario's canonical JSON form.
pub fn scenario_hash(s: &ScenarioConfig) -> String {
    let json = serde_json::to_vec(s).expect("scenario serializes");
    hex::encode(Sha256::digest(&json))
}

impl DatasetFile {
    /// Raw streams of a synthesized dataset. With `analytic_derivatives`
    /// the noise-free twists and rates are attached as a derived block.
    pub fn from_ground_truth(d: &GroundTruthDataset, experiment: &str, analytic_derivatives: bool) -> Self {
        let n = d.robot_count();
        let t_wc0 = d.payload.poses.first().copied().unwrap_or_else(Transform::identity);
        let home_orientations = (1..=n).map(|i| (t_wc0 * d.assembled.t_ci(i)).rotation.to_quaternion()).collect();
        let robots = d
            .raw
            .iter()
            .map(|r| RobotSeries {
                poses: r.poses.iter().map(PoseRecord::from_transform).collect(),
                wrenches: r.wrenches.iter().map(|w| six(&w.moment, &w.force)).collect(),
            })
            .collect::<Vec<_>>();
        let (derived, info) = if analytic_derivatives {
            let series = d
                .reference
                .iter()
                .zip(&robots)
                .map(|(r, raw)| DerivedSeries {
                    twists: r.twists.iter().map(|v| six(&v.angular, &v.linear)).collect(),
                    rates: r.rates.iter().map(|a| six(&a.angular, &a.linear)).collect(),
                    wrenches: raw.wrenches.clone(),
                })
                .collect();
            let info = DerivedInfo {
                source: DerivedSource::Analytic,
                start: 0,
                len: d.len(),
                cutoff_hz: None,
                filter_order: None,
            };
            (Some(series), Some(info))
        } else {
            (None, None)
        };
        DatasetFile {
            header: DatasetHeader {
                schema: SCHEMA_VERSION,
                robots: n,
                sample_rate: d.scenario.sample_rate,
                samples: d.len(),
                scenario_hash: scenario_hash(&d.scenario),
                scenario_name: d.scenario.name.clone(),
                experiment: experiment.to_string(),
                gravity: d.scenario.gravity,
                home_orientations,
                ground_truth: Some(GroundTruthBlock::from_model(&d.truth)),
                derived: info,
            },
            times: d.times.clone(),
            robots,
            derived,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn robot_count(&self) -> usize {
        self.robots.len()
    }

    pub fn pose(&self, robot: usize, k: usize) -> Transform {
        self.robots[robot - 1].poses[k].to_transform()
    }

    pub fn wrench(&self, robot: usize, k: usize) -> Wrench {
        let (m, f) = split6(&self.robots[robot - 1].wrenches[k]);
        Wrench::new(m, f, Frame::grasp(robot))
    }

    pub fn home_orientation(&self, robot: usize) -> Rotation {
        let [w, x, y, z] = self.header.home_orientations[robot - 1];
        Rotation::from_quaternion(w, x, y, z)
    }

    pub fn ground_truth(&self) -> Option<PayloadModel> {
        self.header.ground_truth.as_ref().map(GroundTruthBlock::to_model)
    }

    /// Twist of `robot` at derived index `k`.
    pub fn derived_twist(&self, robot: usize, k: usize) -> Option<Twist> {
        let d = self.derived.as_ref()?.get(robot - 1)?;
        let (w, v) = split6(d.twists.get(k)?);
        Some(Twist::new(w, v, Frame::grasp(robot)))
    }

    pub fn derived_rate(&self, robot: usize, k: usize) -> Option<TwistRate> {
        let d = self.derived.as_ref()?.get(robot - 1)?;
        let (w, v) = split6(d.rates.get(k)?);
        Some(TwistRate::new(w, v, Frame::grasp(robot)))
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidDataset(m));
        let h = &self.header;
        if h.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", h.schema));
        }
        if !(h.sample_rate > 0.0 && h.sample_rate.is_finite()) {
            return bad(format!("sample rate must be positive, got {}", h.sample_rate));
        }
        if h.robots == 0 || self.robots.len() != h.robots || h.home_orientations.len() != h.robots {
            return bad(format!("header declares {} robots, found {}", h.robots, self.robots.len()));
        }
        if self.times.len() != h.samples {
            return bad(format!("header declares {} samples, found {}", h.samples, self.times.len()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("timestamps are not strictly increasing".into());
        }
        for (i, r) in self.robots.iter().enumerate() {
            if r.poses.len() != h.samples || r.wrenches.len() != h.samples {
                return bad(format!("robot {} has a ragged stream", i + 1));
            }
            if let Some(k) = r.poses.iter().position(|p| p.quaternion_norm_error() > 1e-9) {
                return bad(format!("robot {} sample {k}: quaternion is not unit norm", i + 1));
            }
        }
        match (&self.derived, &h.derived) {
            (None, None) => {}
            (Some(series), Some(info)) => {
                if info.start + info.len > h.samples || series.len() != h.robots {
                    return bad("derived block does not fit the raw streams".into());
                }
                if series.iter().any(|s| s.twists.len() != info.len || s.rates.len() != info.len || s.wrenches.len() != info.len) {
                    return bad("derived block is ragged".into());
                }
            }
            _ => return bad("derived block and header disagree".into()),
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), PipelineError> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        let (start, len) = self.header.derived.as_ref().map(|d| (d.start, d.len)).unwrap_or((0, 0));
        for (k, &t) in self.times.iter().enumerate() {
            for (i, r) in self.robots.iter().enumerate() {
                let wr = r.wrenches[k];
                let d = (k >= start && k < start + len)
                    .then(|| self.derived.as_ref().map(|d| &d[i]))
                    .flatten();
                let rec = Record {
                    t,
                    robot: i + 1,
                    q: r.poses[k].q,
                    p: r.poses[k].p,
                    m: [wr[0], wr[1], wr[2]],
                    f: [wr[3], wr[4], wr[5]],
                    twist: d.map(|d| d.twists[k - start]),
                    rate: d.map(|d| d.rates[k - start]),
                    wrench: d.map(|d| d.wrenches[k - start]),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, PipelineError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| PipelineError::InvalidDataset("empty file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)
            .map_err(|e| PipelineError::InvalidDataset(format!("header: {e}")))?;
        let n = header.robots;
        if n == 0 {
            return Err(PipelineError::InvalidDataset("header declares zero robots".into()));
        }
        let mut times = Vec::with_capacity(header.samples);
        let mut robots = vec![RobotSeries { poses: Vec::new(), wrenches: Vec::new() }; n];
        let (start, len) = header.derived.as_ref().map(|d| (d.start, d.len)).unwrap_or((0, 0));
        let mut derived = header
            .derived
            .as_ref()
            .map(|_| vec![DerivedSeries { twists: Vec::new(), rates: Vec::new(), wrenches: Vec::new() }; n]);
        for (line_no, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| PipelineError::InvalidDataset(format!("line {}: {e}", line_no + 2)))?;
            if rec.robot == 0 || rec.robot > n {
                return Err(PipelineError::InvalidDataset(format!("line {}: robot id {} out of range", line_no + 2, rec.robot)));
            }
            if rec.robot == 1 {
                times.push(rec.t);
            } else if times.last() != Some(&rec.t) {
                return Err(PipelineError::InvalidDataset(format!(
                    "line {}: robot {} timestamp {} does not match robot 1",
                    line_no + 2,
                    rec.robot,
                    rec.t
                )));
            }
            let k = times.len() - 1;
            let series = &mut robots[rec.robot - 1];
            if series.poses.len() != k {
                return Err(PipelineError::InvalidDataset(format!("line {}: records out of order", line_no + 2)));
            }
            series.poses.push(PoseRecord { q: rec.q, p: rec.p });
            series.wrenches.push([rec.m[0], rec.m[1], rec.m[2], rec.f[0], rec.f[1], rec.f[2]]);
            if let Some(d) = derived.as_mut() {
                if k >= start && k < start + len {
                    let (Some(tw), Some(rt), Some(wr)) = (rec.twist, rec.rate, rec.wrench) else {
                        return Err(PipelineError::InvalidDataset(format!("line {}: missing derived fields", line_no + 2)));
                    };
                    let s = &mut d[rec.robot - 1];
                    s.twists.push(tw);
                    s.rates.push(rt);
                    s.wrenches.push(wr);
                }
            }
        }
        let file = DatasetFile { header, times, robots, derived };
        file.validate()?;
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        self.write_to(File::create(path).map_err(|e| PipelineError::io(path, e))?)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let f = File::open(path).map_err(|e| PipelineError::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{presets, synthesize_dataset, NoiseConfig, TrajectoryConfig};

    fn small(noisy: bool) -> GroundTruthDataset {
        let mut s = presets::scenario("b").unwrap();
        s.trajectory = TrajectoryConfig::random_via(3);
        if noisy {
            s.noise = NoiseConfig { pose_position_sigma: 1e-3, pose_rotation_sigma: 2e-3, wrench_force_sigma: 0.3, ..NoiseConfig::none() };
        }
        synthesize_dataset(&s).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (noisy, analytic) in [(false, true), (true, false), (true, true)] {
            let file = DatasetFile::from_ground_truth(&small(noisy), "kinematics", analytic);
            let mut buf = Vec::new();
            file.write_to(&mut buf).unwrap();
            let back = DatasetFile::read_from(buf.as_slice()).unwrap();
            assert_eq!(back, file);
            for (a, b) in back.times.iter().zip(&file.times) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_is_first_line_and_one_record_per_robot_sample() {
        let file = DatasetFile::from_ground_truth(&small(false), "kinematics", false);
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * file.len());
        let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(header["robots"], 3);
        assert_eq!(header["ground_truth"]["mass"], 11.672);
        assert_eq!(header["scenario_hash"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn truth_and_home_frames_survive() {
        let d = small(false);
        let file = DatasetFile::from_ground_truth(&d, "kinematics", false);
        let truth = file.ground_truth().unwrap();
        assert!((truth.com_position() - d.truth.com_position()).norm() < 1e-15);
        for i in 1..=3 {
            let r = file.home_orientation(i);
            let expected = (d.payload.poses[0] * d.truth.t_ci(i)).rotation;
            assert!((r.matrix() - expected.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn hash_tracks_the_scenario() {
        let mut s = presets::scenario("a").unwrap();
        let h = scenario_hash(&s);
        assert_eq!(h, scenario_hash(&s.clone()));
        s.seed = 7;
        assert_ne!(h, scenario_hash(&s));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let file = DatasetFile::from_ground_truth(&small(false), "kinematics", false);
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines.swap(1, 2);
        assert!(DatasetFile::read_from(lines.join("\n").as_bytes()).is_err());

        let truncated: Vec<&str> = text.lines().take(5).collect();
        assert!(DatasetFile::read_from(truncated.join("\n").as_bytes()).is_err());

        let mut bad_q = file.clone();
        bad_q.robots[0].poses[3].q = [1.1, 0.0, 0.0, 0.0];
        assert!(bad_q.validate().is_err());

        let mut repeated = file.clone();
        repeated.times[4] = repeated.times[3];
        assert!(repeated.validate().is_err());

        assert!(DatasetFile::read_from("".as_bytes()).is_err());
    }
}
