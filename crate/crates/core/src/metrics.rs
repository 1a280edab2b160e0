//! Kinematic tracking errors between a human keypoint trajectory and the
//! robot trajectory retargeted from it, plus joint motion profiles.
//!
//! Human keypoints are scaled about the wrist by the config's `hand_scale`
//! before comparison, matching the objective.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRole, KinematicChain};
use crate::objective::{HumanHandFrame, ObjectiveConfig, MIN_DIP_TIP_LENGTH};
use crate::solver::JointState;

/// Per-joint extremes of finite-difference velocity and acceleration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointProfile {
    pub rate_hz: f64,
    /// rad/s
    pub max_abs_velocity: Vec<f64>,
    /// rad/s^2
    pub max_abs_acceleration: Vec<f64>,
}

/// Mean of a set of non-negative samples, kept with its sample count so
/// reports over consecutive segments can be merged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanError {
    pub mean: f64,
    pub samples: usize,
}

impl MeanError {
    fn from_sum(sum: f64, samples: usize) -> Self {
        let mean = if samples == 0 { 0.0 } else { sum / samples as f64 };
        Self { mean, samples }
    }

    /// Sample-weighted combination.
    pub fn merge(&self, other: &MeanError) -> MeanError {
        let n = self.samples + other.samples;
        let sum = self.mean * self.samples as f64 + other.mean * other.samples as f64;
        MeanError::from_sum(sum, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: String,
    pub n_frames: usize,
    /// Fingers (0 = thumb) included in the global-position and
    /// relative-to-thumb errors.
    pub finger_selection: BTreeSet<usize>,
    /// m
    pub fingertip_global_pos_err: MeanError,
    /// m
    pub fingertip_rel_wrist_err: MeanError,
    /// m
    pub fingertip_rel_thumb_err: MeanError,
    /// rad
    pub fingertip_orientation_err: MeanError,
    /// Orientation samples dropped for a degenerate DIP-to-tip vector.
    pub skipped_orientation_samples: usize,
    /// Present when at least three states were evaluated.
    pub joint_profiles: Option<JointProfile>,
}

/// The four error metrics, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    GlobalPos,
    RelWrist,
    RelThumb,
    Orientation,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::GlobalPos, Metric::RelWrist, Metric::RelThumb, Metric::Orientation];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::GlobalPos => "fingertip_global_pos_err",
            Metric::RelWrist => "fingertip_rel_wrist_err",
            Metric::RelThumb => "fingertip_rel_thumb_err",
            Metric::Orientation => "fingertip_orientation_err",
        }
    }

    /// Unit used in CSV output.
    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Orientation => "deg",
            _ => "m",
        }
    }
}

impl MetricsReport {
    pub fn error(&self, metric: Metric) -> &MeanError {
        match metric {
            Metric::GlobalPos => &self.fingertip_global_pos_err,
            Metric::RelWrist => &self.fingertip_rel_wrist_err,
            Metric::RelThumb => &self.fingertip_rel_thumb_err,
            Metric::Orientation => &self.fingertip_orientation_err,
        }
    }

    /// Value as written to CSV (orientation converted to degrees).
    pub fn csv_value(&self, metric: Metric) -> f64 {
        let v = self.error(metric).mean;
        if metric == Metric::Orientation {
            v.to_degrees()
        } else {
            v
        }
    }
}

/// Every finger of an `n`-finger hand.
pub fn all_fingers(n: usize) -> BTreeSet<usize> {
    (0..n).collect()
}

/// Thumb plus primary finger `finger`.
pub fn pinch_pair(finger: usize) -> BTreeSet<usize> {
    BTreeSet::from([0, finger])
}

/// Primary finger that comes closest to the thumb anywhere in `frames`.
pub fn closest_pinch_finger(frames: &[HumanHandFrame]) -> Option<usize> {
    let n = frames.first()?.finger_count();
    (1..n).min_by(|&a, &b| {
        let gap = |i: usize| frames.iter().map(|f| (f.tip(i) - f.thumb_tip).norm()).fold(f64::INFINITY, f64::min);
        gap(a).total_cmp(&gap(b))
    })
}

/// Angle between two vectors via the clamped dot product of their unit
/// directions; `None` when either is shorter than the degeneracy threshold.
pub fn direction_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na <= MIN_DIP_TIP_LENGTH || nb <= MIN_DIP_TIP_LENGTH {
        return None;
    }
    Some((a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Mean tracking errors of `robot_states` against `human_frames`.
pub fn evaluate(
    chain: &KinematicChain,
    human_frames: &[HumanHandFrame],
    robot_states: &[JointState],
    cfg: &ObjectiveConfig,
    finger_selection: &BTreeSet<usize>,
) -> Result<MetricsReport> {
    if human_frames.len() != robot_states.len() {
        return Err(Error::DimensionMismatch { expected: human_frames.len(), got: robot_states.len() });
    }
    if human_frames.is_empty() {
        return Err(Error::NoFrames);
    }
    let n = chain.finger_count();
    if let Some(&bad) = finger_selection.iter().find(|&&f| f >= n) {
        return Err(Error::InvalidInput(format!("finger {bad} is out of range for {n} fingers")));
    }

    let (mut global, mut wrist, mut thumb, mut orient) = ([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]);
    let add = |acc: &mut [f64; 2], v: f64| {
        acc[0] += v;
        acc[1] += 1.0;
    };
    let mut skipped = 0;
    for (human, state) in human_frames.iter().zip(robot_states) {
        if human.finger_count() != n {
            return Err(Error::DimensionMismatch { expected: n, got: human.finger_count() });
        }
        let h = human.scaled(cfg.hand_scale);
        let kin = chain.kinematics(&state.q)?;
        let r_wrist = kin.position(FrameRole::Wrist)?;
        let r_thumb = kin.position(FrameRole::ThumbTip)?;
        for i in 0..n {
            let r_tip = kin.position(FrameRole::tip(i))?;
            let h_tip = h.tip(i);
            let selected = finger_selection.contains(&i);
            if selected {
                add(&mut global, (r_tip - h_tip).norm());
            }
            add(&mut wrist, ((r_tip - r_wrist) - (h_tip - h.wrist.position)).norm());
            if selected && i > 0 {
                add(&mut thumb, ((r_tip - r_thumb) - (h_tip - h.thumb_tip)).norm());
            }
            let r_dir = r_tip - kin.position(FrameRole::Dip(i))?;
            match direction_angle(&r_dir, &(h_tip - h.dips[i])) {
                Some(a) => add(&mut orient, a),
                None => skipped += 1,
            }
        }
    }
    let mean = |acc: [f64; 2]| MeanError::from_sum(acc[0], acc[1] as usize);

    let joint_profiles = if robot_states.len() >= 3 {
        let span = robot_states[robot_states.len() - 1].timestamp - robot_states[0].timestamp;
        let rate = (robot_states.len() - 1) as f64 / span;
        if rate.is_finite() && rate > 0.0 {
            Some(joint_profile(robot_states, rate)?)
        } else {
            None
        }
    } else {
        None
    };

    Ok(MetricsReport {
        format_version: crate::io::FORMAT_VERSION.into(),
        n_frames: human_frames.len(),
        finger_selection: finger_selection.clone(),
        fingertip_global_pos_err: mean(global),
        fingertip_rel_wrist_err: mean(wrist),
        fingertip_rel_thumb_err: mean(thumb),
        fingertip_orientation_err: mean(orient),
        skipped_orientation_samples: skipped,
        joint_profiles,
    })
}

/// Central differences at a uniform `rate`: velocity `(q[k+1] - q[k-1]) * rate / 2`,
/// acceleration `(q[k+1] - 2 q[k] + q[k-1]) * rate^2`, maxima over interior samples.
pub fn joint_profile(states: &[JointState], rate: f64) -> Result<JointProfile> {
    if states.len() < 3 {
        return Err(Error::InvalidInput(format!("joint profile needs at least 3 states, got {}", states.len())));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!("rate {rate} Hz must be positive")));
    }
    let m = states[0].len();
    if let Some(s) = states.iter().find(|s| s.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: s.len() });
    }
    let mut vel = vec![0.0f64; m];
    let mut acc = vec![0.0f64; m];
    for w in states.windows(3) {
        for j in 0..m {
            let (a, b, c) = (w[0].q[j], w[1].q[j], w[2].q[j]);
            vel[j] = vel[j].max(((c - a) * 0.5 * rate).abs());
            acc[j] = acc[j].max(((c - 2.0 * b + a) * rate * rate).abs());
        }
    }
    Ok(JointProfile { rate_hz: rate, max_abs_velocity: vel, max_abs_acceleration: acc })
}

/// One CSV row: `preset,trajectory,metric,value,unit,n_frames`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub preset: String,
    pub trajectory: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub n_frames: usize,
}

pub fn metric_rows(preset: &str, trajectory: &str, report: &MetricsReport) -> Vec<MetricRow> {
    Metric::ALL
        .iter()
        .map(|m| MetricRow {
            preset: preset.into(),
            trajectory: trajectory.into(),
            metric: m.name().into(),
            value: report.csv_value(*m),
            unit: m.unit().into(),
            n_frames: report.n_frames,
        })
        .collect()
}

pub fn write_metrics_csv(w: impl Write, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv(r: impl std::io::Read) -> Result<Vec<MetricRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Schema { index: i, message: e.to_string() }))
        .collect()
}

/// Wide table: one row per (preset, trajectory), one column per metric.
pub fn write_combined_table(w: impl Write, rows: &[MetricRow]) -> Result<()> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.preset.as_str(), r.trajectory.as_str())) {
            keys.push((&r.preset, &r.trajectory));
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["preset".to_string(), "trajectory".to_string()];
    header.extend(Metric::ALL.iter().map(|m| format!("{}_{}", m.name(), m.unit())));
    header.push("n_frames".into());
    out.write_record(&header).map_err(csv_err)?;
    for (preset, traj) in keys {
        let mut record = vec![preset.to_string(), traj.to_string()];
        let mut n_frames = 0;
        for m in Metric::ALL {
            let cell = rows.iter().find(|r| r.preset == preset && r.trajectory == traj && r.metric == m.name());
            record.push(cell.map(|r| r.value.to_string()).unwrap_or_default());
            n_frames = cell.map_or(n_frames, |r| r.n_frames);
        }
        record.push(n_frames.to_string());
        out.write_record(&record).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, rate: f64, f: impl Fn(f64) -> f64) -> Vec<JointState> {
        (0..n).map(|k| {
            let t = k as f64 / rate;
            JointState::new(vec![f(t), 0.5], t)
        }).collect()
    }

    #[test]
    fn profiles() {
        let p = joint_profile(&ramp(10, 20.0, |t| t), 20.0).unwrap();
        assert!((p.max_abs_velocity[0] - 1.0).abs() < 1e-12);
        assert!(p.max_abs_acceleration[0] < 1e-9);
        assert_eq!(p.max_abs_velocity[1], 0.0);

        let (a, w) = (0.3, 2.0);
        let p = joint_profile(&ramp(400, 100.0, |t| a * (w * t).sin()), 100.0).unwrap();
        assert!((p.max_abs_acceleration[0] / (a * w * w) - 1.0).abs() < 0.05);

        assert!(joint_profile(&ramp(2, 20.0, |t| t), 20.0).is_err());
    }

    #[test]
    fn angles() {
        let x = Vector3::x();
        assert!((direction_angle(&x, &-x).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(direction_angle(&x, &(x * 2.0)).unwrap(), 0.0);
        assert!(direction_angle(&x, &Vector3::zeros()).is_none());
    }

    #[test]
    fn merge_is_weighted() {
        let a = MeanError { mean: 1.0, samples: 3 };
        let b = MeanError { mean: 2.0, samples: 1 };
        assert_eq!(a.merge(&b), MeanError { mean: 1.25, samples: 4 });
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![MetricRow {
            preset: "full".into(),
            trajectory: "pinch,index".into(),
            metric: "fingertip_global_pos_err".into(),
            value: 0.0125,
            unit: "m".into(),
            n_frames: 100,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("preset,trajectory,metric,value,unit,n_frames\n"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }
}
