//! Synthetic human hand trajectories from a parametric hand skeleton.
//!
//! The skeleton uses the same frame convention as the bundled robot hands:
//! fingers extend along wrist +z, the thumb/index side is +y and the palm
//! faces -x. Keypoints are read off its forward kinematics.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRole, JointSpec, KinematicChain, Pose};
use crate::objective::{HumanHandFrame, Residuals};
use crate::solver::{minimize_box, LeastSquares, SolverSettings};

const FINGER_NAMES: [&str; 4] = ["index", "middle", "ring", "little"];

/// Human hand proportions and placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandMorphParams {
    /// World pose of the wrist.
    pub wrist_position: [f64; 3],
    /// `[w, x, y, z]`
    pub wrist_orientation: [f64; 4],
    /// MCP joint positions in the wrist frame, index first.
    pub finger_bases: Vec<[f64; 3]>,
    /// Proximal, middle and distal phalanx lengths, index first.
    pub finger_segments: Vec<[f64; 3]>,
    /// CMC position in the wrist frame.
    pub thumb_base: [f64; 3],
    /// Tilt of the thumb ray about wrist x (rad).
    pub thumb_tilt: f64,
    /// CMC-to-rotation offset, metacarpal, proximal and distal lengths.
    pub thumb_segments: [f64; 4],
    /// Per-finger length scaling: the thumb, middle and little finger shrink
    /// by this fraction while index and ring grow by it.
    pub mismatch: f64,
}

impl Default for HandMorphParams {
    fn default() -> Self {
        Self::four_finger()
    }
}

impl HandMorphParams {
    /// Adult hand without the little finger, matching four-finger robots.
    pub fn four_finger() -> Self {
        let mut p = Self::five_finger();
        p.finger_bases.pop();
        p.finger_segments.pop();
        p
    }

    pub fn five_finger() -> Self {
        Self {
            wrist_position: DEFAULT_WRIST_POSITION,
            wrist_orientation: DEFAULT_WRIST_ORIENTATION,
            finger_bases: vec![[0.0, 0.026, 0.075], [0.0, 0.004, 0.078], [0.0, -0.016, 0.074], [0.0, -0.034, 0.066]],
            finger_segments: vec![[0.042, 0.025, 0.022], [0.046, 0.028, 0.023], [0.043, 0.027, 0.022], [0.034, 0.020, 0.020]],
            thumb_base: [-0.015, 0.025, 0.02],
            thumb_tilt: -1.2,
            thumb_segments: [0.015, 0.03, 0.032, 0.026],
            mismatch: 0.0,
        }
    }

    pub fn finger_count(&self) -> usize {
        self.finger_bases.len() + 1
    }

    pub fn with_mismatch(mut self, mismatch: f64) -> Self {
        self.mismatch = mismatch;
        self
    }

    pub fn with_wrist(mut self, wrist: &Pose) -> Self {
        self.wrist_position = wrist.position.into();
        let q = wrist.orientation;
        self.wrist_orientation = [q.w, q.i, q.j, q.k];
        self
    }

    pub fn wrist(&self) -> Pose {
        let [w, x, y, z] = self.wrist_orientation;
        Pose::new(
            Vector3::from(self.wrist_position),
            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
        )
    }

    /// Length factor of finger `i` (0 is the thumb).
    pub fn length_factor(&self, finger: usize) -> f64 {
        if finger % 2 == 1 {
            1.0 + self.mismatch
        } else {
            1.0 - self.mismatch
        }
    }

    fn validate(&self) -> Result<()> {
        if self.finger_bases.len() != self.finger_segments.len() || !(1..=4).contains(&self.finger_bases.len()) {
            return Err(Error::InvalidInput("hand morphology needs 1 to 4 primary fingers".into()));
        }
        if self.mismatch.is_nan() || self.mismatch.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("mismatch {} must lie in (-1, 1)", self.mismatch)));
        }
        let lengths = self.finger_segments.iter().flatten().chain(&self.thumb_segments);
        if lengths.into_iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("segment lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Pose of the bundled arm's hand mount at its default start.
const DEFAULT_WRIST_POSITION: [f64; 3] = [0.581938, 0.0, 0.654902];
const DEFAULT_WRIST_ORIENTATION: [f64; 4] = [0.913732, 0.378480, 0.136555, 0.056563];

fn flex_axis() -> Vector3<f64> {
    -Vector3::y()
}

/// Kinematic skeleton of the human hand described by `m`. Joint order is
/// abduction, MCP, PIP, DIP per primary finger, then CMC, rotation, MCP, IP
/// for the thumb.
pub fn human_hand_chain(m: &HandMorphParams) -> Result<KinematicChain> {
    m.validate()?;
    let mut joints = vec![JointSpec::fixed("wrist_mount", "world", "wrist", m.wrist())];
    let mut frames = BTreeMap::from([(FrameRole::Wrist, "wrist".to_string())]);
    let z = |l: f64| Pose::from_translation(0.0, 0.0, l);

    for (f, (base, seg)) in m.finger_bases.iter().zip(&m.finger_segments).enumerate() {
        let name = FINGER_NAMES[f];
        let k = m.length_factor(f + 1);
        let link = |s: &str| format!("{name}_{s}");
        let base = Pose::from_translation(base[0], base[1], base[2]);
        joints.extend([
            JointSpec::revolute(&link("abd"), "wrist", &link("base"), base, Vector3::x(), [-0.6, 0.6]),
            JointSpec::revolute(&link("mcp"), &link("base"), &link("prox"), Pose::identity(), flex_axis(), [-0.4, 1.6]),
            JointSpec::revolute(&link("pip"), &link("prox"), &link("mid"), z(seg[0] * k), flex_axis(), [0.0, 1.9]),
            JointSpec::revolute(&link("dip"), &link("mid"), &link("dist"), z(seg[1] * k), flex_axis(), [0.0, 1.4]),
            JointSpec::fixed(&link("tip_joint"), &link("dist"), &link("tip"), z(seg[2] * k)),
        ]);
        frames.insert(FrameRole::Fingertip(f + 1), link("tip"));
        frames.insert(FrameRole::Dip(f + 1), link("dist"));
    }

    let k = m.length_factor(0);
    let s = m.thumb_segments.map(|l| l * k);
    let b = m.thumb_base;
    joints.extend([
        JointSpec::fixed("thumb_base_joint", "wrist", "thumb_base", Pose::from_xyz_rpy(b, [m.thumb_tilt, 0.0, 0.0])),
        JointSpec::revolute("thumb_cmc", "thumb_base", "thumb_l1", Pose::identity(), flex_axis(), [-0.6, 1.8]),
        JointSpec::revolute("thumb_rot", "thumb_l1", "thumb_l2", z(s[0]), Vector3::z(), [-0.6, 1.8]),
        JointSpec::revolute("thumb_mcp", "thumb_l2", "thumb_prox", z(s[1]), flex_axis(), [-0.6, 1.2]),
        JointSpec::revolute("thumb_ip", "thumb_prox", "thumb_dist", z(s[2]), flex_axis(), [-0.4, 1.4]),
        JointSpec::fixed("thumb_tip_joint", "thumb_dist", "thumb_tip", z(s[3])),
    ]);
    frames.insert(FrameRole::ThumbTip, "thumb_tip".into());
    frames.insert(FrameRole::Dip(0), "thumb_dist".into());

    KinematicChain::new("human_hand", joints, frames, m.finger_count())
}

/// Shape of a generated trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Thumb and primary finger `finger` (1-based) close from 12 cm to
    /// contact and reopen.
    Pinch { finger: usize },
    /// Index abducts across the middle finger and returns.
    Crossing,
    /// Static posture plus zero-mean Gaussian keypoint noise of std `sigma` (m).
    Jitter { sigma: f64 },
    /// Static posture.
    Constant,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    /// `pinch:<index|middle|ring|little|1..4>`, `crossing`, `jitter:<sigma m>`, `constant`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidInput(format!("unknown synthetic kind `{s}`"));
        match (head, arg) {
            ("pinch", arg) => {
                let arg = arg.unwrap_or("index");
                let finger = FINGER_NAMES
                    .iter()
                    .position(|n| *n == arg)
                    .map(|i| i + 1)
                    .or_else(|| arg.parse().ok())
                    .ok_or_else(bad)?;
                Ok(SyntheticKind::Pinch { finger })
            }
            ("crossing", None) => Ok(SyntheticKind::Crossing),
            ("constant", None) => Ok(SyntheticKind::Constant),
            ("jitter", arg) => {
                let sigma = arg.unwrap_or("0.003").parse().map_err(|_| bad())?;
                Ok(SyntheticKind::Jitter { sigma })
            }
            _ => Err(bad()),
        }
    }
}

/// Hand-joint layout helper over [`human_hand_chain`].
struct Layout {
    fingers: usize,
}

impl Layout {
    fn finger(&self, f: usize) -> usize {
        4 * (f - 1)
    }

    fn thumb(&self) -> usize {
        4 * self.fingers
    }

    fn dof(&self) -> usize {
        4 * self.fingers + 4
    }

    /// Loosely curled resting hand.
    fn relaxed(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.dof()];
        for f in 1..=self.fingers {
            let i = self.finger(f);
            q[i] = 0.08 * (f as f64 - 2.0);
            q[i + 1..i + 4].copy_from_slice(&[0.25, 0.3, 0.2]);
        }
        let t = self.thumb();
        q[t..t + 4].copy_from_slice(&[0.3, 0.2, 0.1, 0.1]);
        q
    }

    /// Extended posture with the thumb swung away from the palm.
    fn open(&self) -> Vec<f64> {
        let mut q = self.relaxed();
        for f in 1..=self.fingers {
            let i = self.finger(f);
            q[i + 1..i + 4].copy_from_slice(&[-0.2, 0.0, 0.0]);
        }
        let t = self.thumb();
        q[t..t + 4].copy_from_slice(&[0.0, 0.0, 0.0, 0.0]);
        q
    }
}

/// Tip-to-tip contact between the thumb and `finger`, lightly pulled
/// toward a natural pinch posture to fix the redundant directions.
struct PinchContact<'a> {
    chain: &'a KinematicChain,
    finger: usize,
    guess: Vec<f64>,
}

const PINCH_POSTURE_WEIGHT: f64 = 1e-8;

impl LeastSquares for PinchContact<'_> {
    fn residuals(&self, x: &[f64], with_jacobian: bool) -> Result<Residuals> {
        let kin = self.chain.kinematics(x)?;
        let tip = FrameRole::Fingertip(self.finger);
        let mut res = Residuals::new(x.len(), with_jacobian);
        let gap = kin.position(tip)? - kin.position(FrameRole::ThumbTip)?;
        res.push3(1.0, gap, || {
            kin.position_jacobian(tip).expect("resolved role") - kin.position_jacobian(FrameRole::ThumbTip).expect("resolved role")
        });
        for (j, (v, g)) in x.iter().zip(&self.guess).enumerate() {
            res.push_joint(PINCH_POSTURE_WEIGHT, v - g, j);
        }
        Ok(res)
    }
}

fn blend(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Minimum-jerk profile on [0, 1].
pub fn minimum_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Distance at which a pinch starts and ends.
pub const PINCH_OPEN_DISTANCE: f64 = 0.12;

fn pinch_postures(chain: &KinematicChain, layout: &Layout, finger: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let relaxed = layout.relaxed();
    let mut guess = relaxed.clone();
    let i = layout.finger(finger);
    guess[i..i + 4].copy_from_slice(&[0.0, 0.7, 0.8, 0.5]);
    let t = layout.thumb();
    guess[t..t + 4].copy_from_slice(&[1.0, 0.5 + 0.25 * (finger as f64 - 1.0), 0.2, 0.2]);

    // Only the pinching finger and the thumb move.
    let (mut lo, mut hi) = chain.bounds();
    for j in 0..layout.dof() {
        let free = (i..i + 4).contains(&j) || j >= t;
        if !free {
            lo[j] = relaxed[j];
            hi[j] = relaxed[j];
        }
    }
    let problem = PinchContact { chain, finger, guess: guess.clone() };
    let settings = SolverSettings { max_iter: 500, ..SolverSettings::default() };
    let contact = minimize_box(&problem, &guess, &lo, &hi, &settings)?.x;

    let gap = |q: &[f64]| -> Result<f64> {
        let kin = chain.kinematics(q)?;
        Ok((kin.position(FrameRole::Fingertip(finger))? - kin.position(FrameRole::ThumbTip)?).norm())
    };
    let open = layout.open();
    if gap(&open)? < PINCH_OPEN_DISTANCE {
        return Err(Error::InvalidInput(format!(
            "hand morphology cannot open finger {finger} to {PINCH_OPEN_DISTANCE} m from the thumb"
        )));
    }
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if gap(&blend(&contact, &open, mid))? < PINCH_OPEN_DISTANCE {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((contact.clone(), blend(&contact, &open, b)))
}

/// Closing amount over normalized time: open, close, hold, reopen, open.
fn pinch_profile(u: f64) -> f64 {
    match u {
        u if u < 0.1 => 0.0,
        u if u < 0.45 => minimum_jerk((u - 0.1) / 0.35),
        u if u <= 0.55 => 1.0,
        u if u < 0.9 => 1.0 - minimum_jerk((u - 0.55) / 0.35),
        _ => 0.0,
    }
}

fn keypoints(chain: &KinematicChain, q: &[f64], t: f64) -> Result<HumanHandFrame> {
    let kin = chain.kinematics(q)?;
    let n = chain.finger_count();
    Ok(HumanHandFrame {
        timestamp: t,
        wrist: kin.pose(FrameRole::Wrist)?,
        thumb_tip: kin.position(FrameRole::ThumbTip)?,
        fingertips: (1..n).map(|i| kin.position(FrameRole::Fingertip(i))).collect::<Result<_>>()?,
        dips: (0..n).map(|i| kin.position(FrameRole::Dip(i))).collect::<Result<_>>()?,
    })
}

/// Add zero-mean Gaussian noise of std `sigma` to every keypoint (wrist
/// position included; wrist orientation untouched).
pub fn add_jitter(frames: &mut [HumanHandFrame], sigma: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(format!("jitter sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |p: &mut Vector3<f64>| {
        for v in p.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    };
    for f in frames {
        noise(&mut f.wrist.position);
        noise(&mut f.thumb_tip);
        f.fingertips.iter_mut().for_each(&mut noise);
        f.dips.iter_mut().for_each(&mut noise);
    }
    Ok(())
}

/// Generate `round(duration * rate)` frames at `t_k = k / rate`.
pub fn gen_synthetic(
    kind: SyntheticKind,
    duration: f64,
    rate: f64,
    morphology: &HandMorphParams,
    seed: u64,
) -> Result<Vec<HumanHandFrame>> {
    if !(duration > 0.0 && rate > 0.0 && duration.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("duration {duration} s and rate {rate} Hz must be positive")));
    }
    let chain = human_hand_chain(morphology)?;
    let layout = Layout { fingers: morphology.finger_count() - 1 };
    let count = ((duration * rate).round() as usize).max(1);
    let times = (0..count).map(|k| k as f64 / rate);

    let posture: Box<dyn Fn(f64) -> Vec<f64>> = match kind {
        SyntheticKind::Pinch { finger } => {
            if finger == 0 || finger > layout.fingers {
                return Err(Error::InvalidInput(format!("pinch finger {finger} is not a primary finger")));
            }
            let (contact, open) = pinch_postures(&chain, &layout, finger)?;
            Box::new(move |u| blend(&open, &contact, pinch_profile(u)))
        }
        SyntheticKind::Crossing => {
            let start = layout.relaxed();
            let mut crossed = start.clone();
            crossed[0] = 0.5;
            crossed[1] = 0.55;
            Box::new(move |u| {
                let s = if u < 0.5 { minimum_jerk(2.0 * u) } else { minimum_jerk(2.0 - 2.0 * u) };
                blend(&start, &crossed, s)
            })
        }
        SyntheticKind::Jitter { .. } | SyntheticKind::Constant => {
            let q = layout.relaxed();
            Box::new(move |_| q.clone())
        }
    };

    let mut frames = times
        .map(|t| keypoints(&chain, &posture(t / duration), t))
        .collect::<Result<Vec<_>>>()?;
    if let SyntheticKind::Jitter { sigma } = kind {
        add_jitter(&mut frames, sigma, seed)?;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_gap(frames: &[HumanHandFrame], finger: usize) -> f64 {
        frames.iter().map(|f| (f.tip(finger) - f.thumb_tip).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn pinch_reaches_contact_from_twelve_cm() {
        for mismatch in [0.0, 0.3] {
            for finger in 1..=3 {
                let m = HandMorphParams::four_finger().with_mismatch(mismatch);
                let frames = gen_synthetic(SyntheticKind::Pinch { finger }, 5.0, 20.0, &m, 0).unwrap();
                assert_eq!(frames.len(), 100);
                assert!(min_gap(&frames, finger) < 5e-3, "finger {finger} mismatch {mismatch}");
                let first = (frames[0].tip(finger) - frames[0].thumb_tip).norm();
                assert!((first - PINCH_OPEN_DISTANCE).abs() < 1e-9, "{first}");
            }
        }
    }

    #[test]
    fn constant_and_deterministic() {
        let m = HandMorphParams::default();
        let c = gen_synthetic(SyntheticKind::Constant, 1.0, 20.0, &m, 0).unwrap();
        assert!(c.windows(2).all(|w| w[0].dips == w[1].dips && w[0].fingertips == w[1].fingertips));
        let a = gen_synthetic(SyntheticKind::Jitter { sigma: 0.003 }, 1.0, 20.0, &m, 7).unwrap();
        let b = gen_synthetic(SyntheticKind::Jitter { sigma: 0.003 }, 1.0, 20.0, &m, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(SyntheticKind::Jitter { sigma: 0.003 }, 1.0, 20.0, &m, 8).unwrap());
    }

    #[test]
    fn crossing_passes_middle_finger() {
        let m = HandMorphParams::default();
        let frames = gen_synthetic(SyntheticKind::Crossing, 4.0, 20.0, &m, 0).unwrap();
        let lateral = |f: &HumanHandFrame, i: usize| {
            let local = f.wrist.orientation.inverse() * (f.tip(i) - f.wrist.position);
            local.y
        };
        assert!(lateral(&frames[0], 1) > lateral(&frames[0], 2));
        assert!(lateral(&frames[40], 1) < lateral(&frames[40], 2));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("pinch:middle".parse::<SyntheticKind>().unwrap(), SyntheticKind::Pinch { finger: 2 });
        assert_eq!("jitter:0.003".parse::<SyntheticKind>().unwrap(), SyntheticKind::Jitter { sigma: 0.003 });
        assert!("wave".parse::<SyntheticKind>().is_err());
    }
}
