//! Raw poses and wrenches to twists, twist rates and smoothed wrenches.

use crate::geom::{rot_exp, rot_log, twist_from_pose_derivative, Frame};
use crate::signal::{central_difference_slice, trim_count, Butterworth};
use crate::{Rotation, Transform, Twist, TwistRate, Wrench};

use super::config::{DerivativeSource, RunConfig};
use super::dataset::{split6, DatasetFile, DerivedInfo, DerivedSeries, DerivedSource};
use super::PipelineError;

/// Most samples on each side of a chart that are filtered but not kept.
const CHART_PAD: usize = 200;
/// Largest angle (rad) from the chart center for a kept sample.
const CHART_CORE_RADIUS: f64 = std::f64::consts::FRAC_PI_4;
/// Largest angle (rad) from the chart center for a padding sample.
const CHART_PAD_RADIUS: f64 = 0.75 * std::f64::consts::PI;

/// Streams of one robot over the derived range.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedRobot {
    pub id: usize,
    /// Recorded poses `T_{i0 i}`.
    pub poses: Vec<Transform>,
    pub twists: Vec<Twist>,
    pub rates: Vec<TwistRate>,
    /// Wrenches as seen by the estimators (low-passed when differentiated).
    pub wrenches: Vec<Wrench>,
    /// Unfiltered wrenches.
    pub raw_wrenches: Vec<Wrench>,
}

/// Everything the estimators read, over the samples that survive trimming.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub sample_rate: f64,
    /// Raw index of the first sample.
    pub start: usize,
    pub times: Vec<f64>,
    pub robots: Vec<ProcessedRobot>,
}

impl Processed {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn robot(&self, id: usize) -> Option<&ProcessedRobot> {
        self.robots.iter().find(|r| r.id == id)
    }
}

fn filter_rotations(rots: &[Rotation], f: &Butterworth) -> Vec<Rotation> {
    let n = rots.len();
    let chart = |lo: usize, hi: usize| {
        let sum = rots[lo..hi].iter().fold(nalgebra::Matrix3::zeros(), |acc, r| acc + r.matrix());
        Rotation::project(&sum)
    };
    let filter_range = |lo: usize, hi: usize, center: &Rotation| -> Vec<Rotation> {
        let logs: Vec<_> = rots[lo..hi].iter().map(|r| rot_log(&(center.transpose() * *r)).vector).collect();
        let ch: Vec<Vec<f64>> = (0..3).map(|a| f.filtfilt(&logs.iter().map(|v| v[a]).collect::<Vec<_>>())).collect();
        (0..hi - lo).map(|k| *center * rot_exp(&nalgebra::Vector3::new(ch[0][k], ch[1][k], ch[2][k]))).collect()
    };

    let center = chart(0, n);
    let off = |c: &Rotation, r: &Rotation| (c.transpose() * *r).angle();
    if rots.iter().all(|r| off(&center, r) < CHART_CORE_RADIUS) {
        return filter_range(0, n, &center);
    }
    // Consecutive charts, each centered on its first sample and kept while
    // within a quarter turn; padding extends until the angle grows too big.
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let c = rots[start];
        let mut end = start + 1;
        while end < n && off(&c, &rots[end]) < CHART_CORE_RADIUS {
            end += 1;
        }
        let mut lo = start;
        while lo > 0 && start - lo < CHART_PAD && off(&c, &rots[lo - 1]) < CHART_PAD_RADIUS {
            lo -= 1;
        }
        let mut hi = end;
        while hi < n && hi - end < CHART_PAD && off(&c, &rots[hi]) < CHART_PAD_RADIUS {
            hi += 1;
        }
        let filtered = filter_range(lo, hi, &c);
        out.extend_from_slice(&filtered[start - lo..end - lo]);
        start = end;
    }
    out
}

fn differentiate_channels(rows: &[[f64; 6]], fs: f64) -> Result<Vec<[f64; 6]>, PipelineError> {
    let cols: Vec<Vec<f64>> = (0..6)
        .map(|c| central_difference_slice(&rows.iter().map(|r| r[c]).collect::<Vec<_>>(), fs))
        .collect::<Result<_, _>>()?;
    Ok((0..rows.len()).map(|k| std::array::from_fn(|c| cols[c][k])).collect())
}

fn filter_channels(rows: &[[f64; 6]], f: &Butterworth) -> Vec<[f64; 6]> {
    let cols: Vec<Vec<f64>> = (0..6).map(|c| f.filtfilt(&rows.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
    (0..rows.len()).map(|k| std::array::from_fn(|c| cols[c][k])).collect()
}

/// Low-passes poses and wrenches, differences the poses into body twists
/// and the twists into twist rates, then trims both ends. The result
/// carries a derived block; the raw streams are untouched.
pub fn preprocess(raw: &DatasetFile, cfg: &RunConfig) -> Result<DatasetFile, PipelineError> {
    raw.validate()?;
    let fs = raw.header.sample_rate;
    let n = raw.len();
    let trim = trim_count(cfg.trim_seconds, fs);
    if n < 2 * trim + 3 {
        return Err(PipelineError::InvalidDataset(format!(
            "{n} samples are too few to trim {trim} from each end and difference"
        )));
    }
    let filter = Butterworth::lowpass(cfg.filter_order, cfg.filter_cutoff_hz, fs)
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;

    let mut derived = Vec::with_capacity(raw.robot_count());
    for robot in &raw.robots {
        let poses: Vec<Transform> = robot.poses.iter().map(|p| p.to_transform()).collect();
        let rots = filter_rotations(&poses.iter().map(|t| t.rotation).collect::<Vec<_>>(), &filter);
        let pos: Vec<Vec<f64>> =
            (0..3).map(|a| filter.filtfilt(&poses.iter().map(|t| t.translation[a]).collect::<Vec<_>>())).collect();
        let smooth: Vec<Transform> =
            (0..n).map(|k| Transform::new(rots[k], nalgebra::Vector3::new(pos[0][k], pos[1][k], pos[2][k]))).collect();

        let entries: Vec<Vec<f64>> = (0..12)
            .map(|e| {
                let (r, c) = (e % 3, e / 3);
                let x: Vec<f64> = smooth.iter().map(|t| t.to_homogeneous()[(r, c)]).collect();
                central_difference_slice(&x, fs)
            })
            .collect::<Result<_, _>>()?;
        let twists: Vec<[f64; 6]> = (0..n)
            .map(|k| {
                let mut t_dot = nalgebra::Matrix4::zeros();
                for (e, ch) in entries.iter().enumerate() {
                    t_dot[(e % 3, e / 3)] = ch[k];
                }
                let v = twist_from_pose_derivative(&smooth[k], &t_dot);
                [v.angular.x, v.angular.y, v.angular.z, v.linear.x, v.linear.y, v.linear.z]
            })
            .collect();
        let rates = differentiate_channels(&twists, fs)?;
        let wrenches = filter_channels(&robot.wrenches, &filter);
        derived.push(DerivedSeries {
            twists: twists[trim..n - trim].to_vec(),
            rates: rates[trim..n - trim].to_vec(),
            wrenches: wrenches[trim..n - trim].to_vec(),
        });
    }

    let mut out = raw.clone();
    out.header.derived = Some(DerivedInfo {
        source: DerivedSource::Differentiated,
        start: trim,
        len: n - 2 * trim,
        cutoff_hz: Some(cfg.filter_cutoff_hz),
        filter_order: Some(cfg.filter_order),
    });
    out.derived = Some(derived);
    Ok(out)
}

/// Typed view of a dataset's derived block, running [`preprocess`] first
/// when the configuration asks for differentiation and the file does not
/// already carry differentiated data.
pub fn processed_view(file: &DatasetFile, cfg: &RunConfig) -> Result<Processed, PipelineError> {
    let owned;
    let file = match (cfg.derivative_source, file.header.derived.as_ref().map(|d| d.source)) {
        (DerivativeSource::Dataset, None) => {
            return Err(PipelineError::InvalidDataset("derivative source is dataset but the file has no derived block".into()))
        }
        (DerivativeSource::Dataset, Some(_)) | (DerivativeSource::Differentiate, Some(DerivedSource::Differentiated)) => file,
        (DerivativeSource::Differentiate, _) => {
            owned = preprocess(file, cfg)?;
            &owned
        }
    };
    let info = file.header.derived.as_ref().expect("derived block present");
    let series = file.derived.as_ref().expect("derived block present");
    let range = info.start..info.start + info.len;
    let robots = series
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let id = i + 1;
            let frame = Frame::grasp(id);
            ProcessedRobot {
                id,
                poses: range.clone().map(|k| file.pose(id, k)).collect(),
                twists: d.twists.iter().map(|v| { let (w, l) = split6(v); Twist::new(w, l, frame) }).collect(),
                rates: d.rates.iter().map(|v| { let (w, l) = split6(v); TwistRate::new(w, l, frame) }).collect(),
                wrenches: d.wrenches.iter().map(|v| { let (m, f) = split6(v); Wrench::new(m, f, frame) }).collect(),
                raw_wrenches: range.clone().map(|k| file.wrench(id, k)).collect(),
            }
        })
        .collect();
    Ok(Processed { sample_rate: file.header.sample_rate, start: info.start, times: file.times[range].to_vec(), robots })
}
