//! File formats: robot chains (URDF subset or native JSON plus a role map),
//! human hand trajectories (JSONL), joint-state outputs and reports, and the
//! synthetic trajectory generator.
//!
//! Every format carries a `format_version`; files whose major version is not
//! `1` are rejected.

mod synthetic;
mod urdf;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ablation::HandProfile;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{FrameRole, JointKind, JointSpec, KinematicChain, Pose};
use crate::objective::HumanHandFrame;
use crate::solver::{check_increasing, JointState};

pub use synthetic::{add_jitter, gen_synthetic, human_hand_chain, minimum_jerk, HandMorphParams, SyntheticKind};
pub use urdf::parse_urdf_subset;

pub const FORMAT_VERSION: &str = "1.0";

/// Quaternions within this distance of unit norm are renormalized on load.
const QUAT_NORM_TOL: f64 = 1e-6;

fn check_version(v: &str) -> Result<()> {
    match v.split('.').next() {
        Some("1") => Ok(()),
        _ => Err(Error::UnsupportedVersion(v.to_string())),
    }
}

fn quat_from_wxyz(q: [f64; 4], what: &str) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = raw.norm();
    if !n.is_finite() || (n - 1.0).abs() > QUAT_NORM_TOL {
        return Err(Error::InvalidInput(format!("{what}: quaternion norm {n} is not 1")));
    }
    if (n - 1.0).abs() <= 1e-12 {
        Ok(UnitQuaternion::new_unchecked(raw))
    } else {
        Ok(UnitQuaternion::new_normalize(raw))
    }
}

fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- role map

/// Semantic frame assignment (role -> link name) for a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleMap {
    pub finger_count: usize,
    pub frames: BTreeMap<FrameRole, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoleMapFile {
    format_version: String,
    finger_count: usize,
    frames: BTreeMap<String, String>,
}

fn parse_frames(frames: BTreeMap<String, String>) -> Result<BTreeMap<FrameRole, String>> {
    frames.into_iter().map(|(k, v)| Ok((k.parse()?, v))).collect()
}

fn emit_frames(frames: &BTreeMap<FrameRole, String>) -> BTreeMap<String, String> {
    frames.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

impl RoleMap {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: RoleMapFile = serde_json::from_str(text)?;
        check_version(&file.format_version)?;
        Ok(Self { finger_count: file.finger_count, frames: parse_frames(file.frames)? })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = RoleMapFile {
            format_version: FORMAT_VERSION.into(),
            finger_count: self.finger_count,
            frames: emit_frames(&self.frames),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

// ------------------------------------------------------------ native chain

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginDoc {
    position: [f64; 3],
    /// `[w, x, y, z]`
    orientation: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    parent: String,
    child: String,
    origin: OriginDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    format_version: String,
    name: String,
    finger_count: usize,
    joints: Vec<JointDoc>,
    frames: BTreeMap<String, String>,
}

/// Parse the native JSON chain description.
pub fn parse_chain_json(text: &str) -> Result<KinematicChain> {
    let doc: ChainDoc = serde_json::from_str(text)?;
    check_version(&doc.format_version)?;
    let joints = doc
        .joints
        .into_iter()
        .map(|j| {
            let origin = Pose::new(
                Vector3::from(j.origin.position),
                quat_from_wxyz(j.origin.orientation, &format!("joint `{}` origin", j.name))?,
            );
            let kind = match j.kind.as_str() {
                "revolute" => JointKind::Revolute,
                "fixed" => JointKind::Fixed,
                other => return Err(Error::UnsupportedJointType { joint: j.name, kind: other.into() }),
            };
            let axis = match (kind, j.axis) {
                (JointKind::Revolute, Some(a)) => Vector3::from(a),
                (JointKind::Revolute, None) => {
                    return Err(Error::InvalidChain(format!("revolute joint `{}` has no axis", j.name)))
                }
                (JointKind::Fixed, _) => Vector3::z(),
            };
            let limits = if kind == JointKind::Revolute { j.limits } else { None };
            Ok(JointSpec { name: j.name, kind, parent: j.parent, child: j.child, origin, axis, limits })
        })
        .collect::<Result<Vec<_>>>()?;
    KinematicChain::new(doc.name, joints, parse_frames(doc.frames)?, doc.finger_count)
}

/// Serialize a chain to the native JSON description.
pub fn emit_chain_json(chain: &KinematicChain) -> Result<String> {
    let joints = chain
        .joints()
        .iter()
        .map(|j| {
            let revolute = j.kind == JointKind::Revolute;
            JointDoc {
                name: j.name.clone(),
                kind: j.kind.as_str().into(),
                parent: j.parent.clone(),
                child: j.child.clone(),
                origin: OriginDoc { position: j.origin.position.into(), orientation: quat_to_wxyz(&j.origin.orientation) },
                axis: revolute.then(|| j.axis.into()),
                limits: if revolute { j.limits } else { None },
            }
        })
        .collect();
    let doc = ChainDoc {
        format_version: FORMAT_VERSION.into(),
        name: chain.name().into(),
        finger_count: chain.finger_count(),
        joints,
        frames: emit_frames(chain.frames()),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Sidecar role map next to a URDF: `robot.urdf` -> `robot.roles.json`.
pub fn default_role_map_path(urdf: &Path) -> PathBuf {
    urdf.with_extension("roles.json")
}

/// Load a chain from native JSON (`.json`) or a URDF subset with its role
/// map (explicit, or the sidecar next to the URDF).
pub fn load_chain(path: &Path, roles: Option<&Path>) -> Result<KinematicChain> {
    let text = fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        return parse_chain_json(&text);
    }
    let roles_path = roles.map(Path::to_path_buf).unwrap_or_else(|| default_role_map_path(path));
    let roles = RoleMap::from_json(&fs::read_to_string(&roles_path).map_err(|e| {
        Error::InvalidInput(format!("role map {}: {e}", roles_path.display()))
    })?)?;
    parse_urdf_subset(&text, &roles)
}

/// Bundled robot description for `profile`.
pub fn builtin_chain(profile: HandProfile) -> Result<KinematicChain> {
    let (urdf, roles) = match profile {
        HandProfile::Leap => (
            include_str!("../../assets/panda_leap.urdf"),
            include_str!("../../assets/panda_leap.roles.json"),
        ),
        HandProfile::Shadow => (
            include_str!("../../assets/panda_shadow.urdf"),
            include_str!("../../assets/panda_shadow.roles.json"),
        ),
    };
    parse_urdf_subset(urdf, &RoleMap::from_json(roles)?)
}

// -------------------------------------------------------------- trajectory

/// First record of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format_version: String,
    pub kind: String,
    pub finger_count: usize,
    /// Role names in record order (see [`keypoint_names`]).
    pub keypoints: Vec<String>,
    pub source_frame: String,
    pub units: String,
    pub rate_hz: f64,
}

pub const TRAJECTORY_KIND: &str = "hand_trajectory";

/// Canonical keypoint naming for `finger_count` fingers.
pub fn keypoint_names(finger_count: usize) -> Vec<String> {
    FrameRole::required(finger_count).iter().map(|r| r.to_string()).collect()
}

impl TrajectoryHeader {
    pub fn new(finger_count: usize, rate_hz: f64) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            kind: TRAJECTORY_KIND.into(),
            finger_count,
            keypoints: keypoint_names(finger_count),
            source_frame: "world".into(),
            units: "m".into(),
            rate_hz,
        }
    }

    fn validate(&self) -> Result<()> {
        check_version(&self.format_version)?;
        let bad = |message: String| Err(Error::Schema { index: 0, message });
        if self.kind != TRAJECTORY_KIND {
            return bad(format!("header kind `{}` is not `{TRAJECTORY_KIND}`", self.kind));
        }
        if self.units != "m" {
            return bad(format!("units `{}` are not meters", self.units));
        }
        if self.finger_count < 2 {
            return bad(format!("finger_count {} < 2", self.finger_count));
        }
        if self.keypoints != keypoint_names(self.finger_count) {
            return bad(format!("keypoints {:?} do not match finger_count {}", self.keypoints, self.finger_count));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad(format!("rate_hz {} is not positive", self.rate_hz));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    wrist: OriginDoc,
    thumb_tip: [f64; 3],
    fingertips: Vec<[f64; 3]>,
    dips: Vec<[f64; 3]>,
}

impl FrameRecord {
    fn from_frame(f: &HumanHandFrame) -> Self {
        Self {
            t: f.timestamp,
            wrist: OriginDoc { position: f.wrist.position.into(), orientation: quat_to_wxyz(&f.wrist.orientation) },
            thumb_tip: f.thumb_tip.into(),
            fingertips: f.fingertips.iter().map(|p| (*p).into()).collect(),
            dips: f.dips.iter().map(|p| (*p).into()).collect(),
        }
    }

    fn into_frame(self, finger_count: usize) -> Result<HumanHandFrame> {
        if self.dips.len() != finger_count || self.fingertips.len() + 1 != finger_count {
            return Err(Error::InvalidInput(format!(
                "{} fingertips and {} DIPs do not match finger_count {finger_count}",
                self.fingertips.len(),
                self.dips.len()
            )));
        }
        let frame = HumanHandFrame {
            timestamp: self.t,
            wrist: Pose::new(Vector3::from(self.wrist.position), quat_from_wxyz(self.wrist.orientation, "wrist")?),
            thumb_tip: Vector3::from(self.thumb_tip),
            fingertips: self.fingertips.into_iter().map(Vector3::from).collect(),
            dips: self.dips.into_iter().map(Vector3::from).collect(),
        };
        frame.validate()?;
        Ok(frame)
    }
}

/// Parsed trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub frames: Vec<HumanHandFrame>,
}

fn schema(index: usize, e: impl std::fmt::Display) -> Error {
    Error::Schema { index, message: e.to_string() }
}

/// Decode one frame record (stream transport and file body share this).
/// `index` is the 0-based frame index used in error messages.
pub fn parse_frame_record(value: Value, finger_count: usize, index: usize) -> Result<HumanHandFrame> {
    let rec: FrameRecord = serde_json::from_value(value).map_err(|e| schema(index, e))?;
    rec.into_frame(finger_count).map_err(|e| match e {
        Error::Schema { .. } => e,
        other => schema(index, other),
    })
}

/// Encode one frame as a JSON value.
pub fn frame_record(frame: &HumanHandFrame) -> Value {
    serde_json::to_value(FrameRecord::from_frame(frame)).expect("frame records serialize")
}

pub fn parse_header(value: Value) -> Result<TrajectoryHeader> {
    let version = value.get("format_version").and_then(Value::as_str).map(str::to_string);
    match version {
        Some(v) => check_version(&v)?,
        None => return Err(schema(0, "header has no format_version")),
    }
    let header: TrajectoryHeader = serde_json::from_value(value).map_err(|e| schema(0, format!("header: {e}")))?;
    header.validate()?;
    Ok(header)
}

/// Read a trajectory from JSONL (header line then one frame per line) or
/// from a single JSON array whose first element is the header. Frame
/// indices in errors count frames from 0, excluding the header.
pub fn read_trajectory(mut reader: impl Read) -> Result<Trajectory> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let trimmed = text.trim_start();
    let mut values: Vec<Value> = Vec::new();
    if trimmed.starts_with('[') {
        let doc: Value = serde_json::from_str(trimmed).map_err(|e| schema(0, e))?;
        values = match doc {
            Value::Array(v) => v,
            _ => unreachable!(),
        };
    } else {
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let idx = values.len().saturating_sub(1);
            values.push(serde_json::from_str(line).map_err(|e| schema(idx, format!("line {}: {e}", line_no + 1)))?);
        }
    }
    let mut it = values.into_iter();
    let header = parse_header(it.next().ok_or(Error::NoFrames)?)?;
    let frames = it
        .enumerate()
        .map(|(i, v)| parse_frame_record(v, header.finger_count, i))
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    check_increasing(frames.iter().map(|f| f.timestamp))?;
    Ok(Trajectory { header, frames })
}

pub fn load_trajectory_file(path: &Path) -> Result<Trajectory> {
    read_trajectory(BufReader::new(fs::File::open(path)?))
}

/// Frames of a trajectory file.
pub fn load_trajectory(path: &Path) -> Result<Vec<HumanHandFrame>> {
    Ok(load_trajectory_file(path)?.frames)
}

pub fn write_trajectory(mut w: impl Write, header: &TrajectoryHeader, frames: &[HumanHandFrame]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for f in frames {
        serde_json::to_writer(&mut w, &FrameRecord::from_frame(f))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Write frames as JSONL. `rate_hz` is recorded in the header.
pub fn save_trajectory(path: &Path, frames: &[HumanHandFrame], rate_hz: f64) -> Result<()> {
    let n = frames.first().ok_or(Error::NoFrames)?.finger_count();
    let header = TrajectoryHeader::new(n, rate_hz);
    write_atomic(path, |w| write_trajectory(w, &header, frames))
}

// ------------------------------------------------------------ joint states

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatesHeader {
    format_version: String,
    kind: String,
    dof: usize,
    #[serde(default)]
    joint_names: Vec<String>,
}

const STATES_KIND: &str = "joint_states";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    t: f64,
    q: Vec<f64>,
}

/// Write joint states as JSONL, optionally naming the joints.
pub fn save_states_named(path: &Path, states: &[JointState], joint_names: &[&str]) -> Result<()> {
    let dof = states.first().ok_or(Error::NoFrames)?.len();
    if !joint_names.is_empty() && joint_names.len() != dof {
        return Err(Error::DimensionMismatch { expected: dof, got: joint_names.len() });
    }
    let header = StatesHeader {
        format_version: FORMAT_VERSION.into(),
        kind: STATES_KIND.into(),
        dof,
        joint_names: joint_names.iter().map(|s| s.to_string()).collect(),
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &header)?;
        writeln!(w)?;
        for s in states {
            if s.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, got: s.len() });
            }
            serde_json::to_writer(&mut *w, &StateRecord { t: s.timestamp, q: s.q.clone() })?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn save_states(path: &Path, states: &[JointState]) -> Result<()> {
    save_states_named(path, states, &[])
}

pub fn load_states(path: &Path) -> Result<Vec<JointState>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let header_line = lines.next().ok_or(Error::NoFrames)??;
    let header: Value = serde_json::from_str(&header_line).map_err(|e| schema(0, e))?;
    check_version(header.get("format_version").and_then(Value::as_str).unwrap_or(""))?;
    let header: StatesHeader = serde_json::from_value(header).map_err(|e| schema(0, format!("header: {e}")))?;
    if header.kind != STATES_KIND {
        return Err(schema(0, format!("header kind `{}` is not `{STATES_KIND}`", header.kind)));
    }
    let mut states = Vec::new();
    for (i, line) in lines.enumerate() {
        let rec: StateRecord = serde_json::from_str(&line?).map_err(|e| schema(i, e))?;
        if rec.q.len() != header.dof {
            return Err(schema(i, format!("{} joint values, header declares {}", rec.q.len(), header.dof)));
        }
        states.push(JointState::new(rec.q, rec.t));
    }
    if states.is_empty() {
        return Err(Error::NoFrames);
    }
    check_increasing(states.iter().map(|s| s.timestamp))?;
    Ok(states)
}

// ------------------------------------------------------------------ report

pub fn save_report(path: &Path, report: &MetricsReport) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn load_report(path: &Path) -> Result<MetricsReport> {
    let value: Value = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
    check_version(value.get("format_version").and_then(Value::as_str).unwrap_or(""))?;
    Ok(serde_json::from_value(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64) -> HumanHandFrame {
        HumanHandFrame {
            timestamp: t,
            wrist: Pose::from_xyz_rpy([0.4, 0.0, 0.3], [0.1, 0.2, 0.3]),
            thumb_tip: Vector3::new(0.5, 0.05, 0.3),
            fingertips: vec![Vector3::new(0.55, 0.02, 0.3), Vector3::new(0.56, -0.01, 0.3)],
            dips: vec![Vector3::new(0.48, 0.05, 0.3), Vector3::new(0.53, 0.02, 0.3), Vector3::new(0.54, -0.01, 0.3)],
        }
    }

    fn jsonl(frames: &[HumanHandFrame]) -> String {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &TrajectoryHeader::new(3, 20.0), frames).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_and_array_form() {
        let frames = vec![frame(0.0), frame(0.05), frame(0.1)];
        let text = jsonl(&frames);
        let back = read_trajectory(text.as_bytes()).unwrap();
        assert_eq!(back.frames, frames);
        let array = format!("[{}]", text.trim_end().replace('\n', ","));
        assert_eq!(read_trajectory(array.as_bytes()).unwrap().frames, frames);
    }

    #[test]
    fn documented_errors() {
        let header_only = jsonl(&[]);
        assert!(matches!(read_trajectory(header_only.as_bytes()), Err(Error::NoFrames)));
        assert_eq!(read_trajectory(header_only.as_bytes()).unwrap_err().to_string(), "no frames");

        let text = jsonl(&[frame(0.0), frame(0.1), frame(0.05)]);
        assert!(matches!(read_trajectory(text.as_bytes()), Err(Error::Schema { index: 2, .. })));

        let v2 = jsonl(&[frame(0.0)]).replacen("\"1.0\"", "\"2.0\"", 1);
        assert!(matches!(read_trajectory(v2.as_bytes()), Err(Error::UnsupportedVersion(_))));

        let mut bad = frame(0.1);
        bad.fingertips.pop();
        let mut text = jsonl(&[frame(0.0)]);
        text.push_str(&serde_json::to_string(&frame_record(&bad)).unwrap());
        assert!(matches!(read_trajectory(text.as_bytes()), Err(Error::Schema { index: 1, .. })));
    }

    #[test]
    fn builtin_chains_parse() {
        assert_eq!(builtin_chain(HandProfile::Leap).unwrap().actuated_count(), 23);
        assert_eq!(builtin_chain(HandProfile::Shadow).unwrap().actuated_count(), 31);
    }

    #[test]
    fn role_map_round_trip() {
        let chain = builtin_chain(HandProfile::Leap).unwrap();
        let map = RoleMap { finger_count: 4, frames: chain.frames().clone() };
        assert_eq!(RoleMap::from_json(&map.to_json().unwrap()).unwrap(), map);
    }
}
