//! The composite retargeting objective.
//!
//! Every term is a weighted sum of squared residuals, so each one is
//! assembled as a stacked residual vector `r` with its Jacobian `J`
//! (rows pre-multiplied by the square root of their weight). The term value
//! is `|r|^2` and its gradient is `2 J^T r`. The solver reuses the same
//! stack as a Gauss-Newton model.
//!
//! Switching weights and pinch targets depend only on the human keypoints,
//! so they are constants with respect to `q` inside a frame.

use nalgebra::{DMatrix, DVector, Matrix3xX, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRole, KinematicChain, Kinematics, Pose};

/// Minimum DIP-to-tip length accepted on a human frame (meters).
pub const MIN_DIP_TIP_LENGTH: f64 = 1e-4;

/// One sample of tracked human hand keypoints, world frame, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanHandFrame {
    pub timestamp: f64,
    pub wrist: Pose,
    pub thumb_tip: Vector3<f64>,
    /// Primary fingers (index, middle, ring, little), length N-1.
    pub fingertips: Vec<Vector3<f64>>,
    /// DIP keypoints of every finger, thumb first, length N.
    pub dips: Vec<Vector3<f64>>,
}

impl HumanHandFrame {
    pub fn finger_count(&self) -> usize {
        self.dips.len()
    }

    /// Tip of finger `i` (0 is the thumb).
    pub fn tip(&self, finger: usize) -> Vector3<f64> {
        if finger == 0 {
            self.thumb_tip
        } else {
            self.fingertips[finger - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fingertips.len() + 1 != self.dips.len() {
            return Err(Error::InvalidInput(format!(
                "{} fingertips but {} DIP keypoints",
                self.fingertips.len(),
                self.dips.len()
            )));
        }
        let finite = self.timestamp.is_finite()
            && self.wrist.position.iter().all(|v| v.is_finite())
            && self.wrist.orientation.coords.iter().all(|v| v.is_finite())
            && self
                .fingertips
                .iter()
                .chain(&self.dips)
                .chain(std::iter::once(&self.thumb_tip))
                .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidInput("non-finite keypoint".into()));
        }
        for i in 0..self.finger_count() {
            let len = (self.tip(i) - self.dips[i]).norm();
            if len <= MIN_DIP_TIP_LENGTH {
                return Err(Error::InvalidInput(format!(
                    "finger {i}: DIP-to-tip length {len:.2e} m is degenerate"
                )));
            }
        }
        Ok(())
    }

    /// Enlarge the hand about its wrist; orientation is unchanged.
    pub fn scaled(&self, scale: f64) -> HumanHandFrame {
        let w = self.wrist.position;
        let s = |p: &Vector3<f64>| w + (p - w) * scale;
        HumanHandFrame {
            timestamp: self.timestamp,
            wrist: self.wrist,
            thumb_tip: s(&self.thumb_tip),
            fingertips: self.fingertips.iter().map(s).collect(),
            dips: self.dips.iter().map(s).collect(),
        }
    }

    /// Apply a rigid world transform to every keypoint.
    pub fn transformed(&self, by: &Pose) -> HumanHandFrame {
        let t = |p: &Vector3<f64>| by.transform_point(p);
        HumanHandFrame {
            timestamp: self.timestamp,
            wrist: by.compose(&self.wrist),
            thumb_tip: t(&self.thumb_tip),
            fingertips: self.fingertips.iter().map(t).collect(),
            dips: self.dips.iter().map(t).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalAnchor {
    ThumbTip,
    WristPosition,
}

/// Shape of the pinch switching weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchSwitch {
    Sigmoid,
    /// 1 below `eps1`, 0 above.
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub thumb_pos: f64,
    pub wrist_rot: f64,
    pub fingertip_pos: f64,
    pub fingertip_rot: f64,
    pub pinch: f64,
}

impl Lambdas {
    pub fn scaled(&self, k: f64) -> Lambdas {
        Lambdas {
            thumb_pos: self.thumb_pos * k,
            wrist_rot: self.wrist_rot * k,
            fingertip_pos: self.fingertip_pos * k,
            fingertip_rot: self.fingertip_rot * k,
            pinch: self.pinch * k,
        }
    }

    fn as_array(&self) -> [f64; 5] {
        [self.thumb_pos, self.wrist_rot, self.fingertip_pos, self.fingertip_rot, self.pinch]
    }
}

/// Weights, thresholds and term switches. Ablations are values of this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub lambda: Lambdas,
    pub eps1: f64,
    pub eps2: f64,
    pub sigmoid_slope: f64,
    pub hand_scale: f64,
    pub w_pos: Vec<f64>,
    pub w_vel: Vec<f64>,
    pub q_bar: Vec<f64>,
    pub pinch_term: bool,
    pub pinch_rescale: bool,
    pub pinch_switch: PinchSwitch,
    pub fingertip_rot_term: bool,
    pub fingertip_rot_uses_wrist_to_dip: bool,
    pub global_anchor: GlobalAnchor,
    pub joint_reg: bool,
    pub vel_reg: bool,
    pub complementary_shape_weight: bool,
}

impl ObjectiveConfig {
    pub fn validate(&self, actuated_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eps1 > 0.0 && self.eps2 > 0.0 && self.eps2 < self.eps1) {
            return bad(format!("need 0 < eps2 < eps1, got eps1={} eps2={}", self.eps1, self.eps2));
        }
        if !self.lambda.as_array().iter().all(|l| l.is_finite() && *l >= 0.0) {
            return bad("lambda weights must be finite and nonnegative".into());
        }
        if !(self.hand_scale.is_finite() && self.hand_scale > 0.0) {
            return bad(format!("hand_scale must be positive, got {}", self.hand_scale));
        }
        if !self.sigmoid_slope.is_finite() {
            return bad("sigmoid_slope must be finite".into());
        }
        for (name, v) in [("w_pos", &self.w_pos), ("w_vel", &self.w_vel), ("q_bar", &self.q_bar)] {
            if v.len() != actuated_count {
                return bad(format!("{name} has length {}, chain has {actuated_count} joints", v.len()));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return bad(format!("{name} contains non-finite values"));
            }
        }
        if self.w_pos.iter().chain(&self.w_vel).any(|w| *w < 0.0) {
            return bad("joint weights must be nonnegative".into());
        }
        Ok(())
    }

    /// s~ is only switched when the pinch term it complements is active.
    pub fn shape_weight_switched(&self) -> bool {
        self.pinch_term && self.complementary_shape_weight
    }

    /// Pinch switching weight s(d).
    pub fn pinch_weight(&self, d: f64) -> f64 {
        match self.pinch_switch {
            PinchSwitch::Sigmoid => sigmoid(d, self.eps1, self.sigmoid_slope),
            PinchSwitch::Step => {
                if d < self.eps1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Shape-vector weight s~(d); constant 1 when the pinch term is off.
    pub fn shape_weight(&self, d: f64) -> f64 {
        if !self.shape_weight_switched() {
            return 1.0;
        }
        match self.pinch_switch {
            PinchSwitch::Sigmoid => sigmoid(d, self.eps1, -self.sigmoid_slope),
            PinchSwitch::Step => 1.0 - self.pinch_weight(d),
        }
    }

    /// Names of the fields that differ from `other`.
    pub fn diff(&self, other: &ObjectiveConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => { $( if self.$f != other.$f { out.push(stringify!($f)); } )* };
        }
        cmp!(
            lambda, eps1, eps2, sigmoid_slope, hand_scale, w_pos, w_vel, q_bar, pinch_term,
            pinch_rescale, pinch_switch, fingertip_rot_term, fingertip_rot_uses_wrist_to_dip,
            global_anchor, joint_reg, vel_reg, complementary_shape_weight
        );
        out
    }
}

/// `1 / (1 + exp(w (x - c)))`, exponent clamped to +-50.
pub fn sigmoid(x: f64, c: f64, w: f64) -> f64 {
    let e = (w * (x - c)).clamp(-50.0, 50.0);
    1.0 / (1.0 + e.exp())
}

/// Map pinch distances in `[eps2, eps1]` linearly onto `[0, eps1]`; zero
/// below `eps2`, identity above `eps1`.
pub fn rescale_distance(d: f64, eps1: f64, eps2: f64) -> f64 {
    if d < eps2 {
        0.0
    } else if d <= eps1 {
        eps1 / (eps1 - eps2) * (d - eps2)
    } else {
        d
    }
}

/// Geodesic rotation vector of `q` (angle in `[0, pi]`).
pub fn rotation_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (w, v) = if q.w >= 0.0 { (q.w, q.imag()) } else { (-q.w, -q.imag()) };
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

/// Geodesic angle between two orientations.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    rotation_log(&(a * b.inverse())).norm()
}

/// Human-side quantities of one frame after hand scaling, shared by all
/// solver iterations on that frame.
#[derive(Clone, Debug)]
pub struct HandTarget {
    pub wrist: Pose,
    /// Tips of all fingers, thumb first.
    pub tips: Vec<Vector3<f64>>,
    pub dips: Vec<Vector3<f64>>,
    /// d_i for primary fingers (index 0 unused, kept 0).
    pub pinch_distance: Vec<f64>,
    pub pinch_weight: Vec<f64>,
    pub shape_weight: Vec<f64>,
    /// `l(d_i) * unit(gamma_i)` (or `gamma_i` without rescaling).
    pub pinch_target: Vec<Vector3<f64>>,
}

impl HandTarget {
    pub fn new(human: &HumanHandFrame, cfg: &ObjectiveConfig) -> Result<Self> {
        human.validate()?;
        let scaled = human.scaled(cfg.hand_scale);
        let n = scaled.finger_count();
        let tips: Vec<_> = (0..n).map(|i| scaled.tip(i)).collect();
        let mut pinch_distance = vec![0.0; n];
        let mut pinch_weight = vec![0.0; n];
        let mut shape_weight = vec![1.0; n];
        let mut pinch_target = vec![Vector3::zeros(); n];
        for i in 1..n {
            let gamma = tips[i] - tips[0];
            let d = gamma.norm();
            pinch_distance[i] = d;
            pinch_weight[i] = cfg.pinch_weight(d);
            shape_weight[i] = cfg.shape_weight(d);
            pinch_target[i] = if cfg.pinch_rescale {
                let l = rescale_distance(d, cfg.eps1, cfg.eps2);
                if l == 0.0 {
                    Vector3::zeros()
                } else {
                    gamma * (l / d)
                }
            } else {
                gamma
            };
        }
        Ok(Self {
            wrist: scaled.wrist,
            tips,
            dips: scaled.dips,
            pinch_distance,
            pinch_weight,
            shape_weight,
            pinch_target,
        })
    }

    pub fn finger_count(&self) -> usize {
        self.tips.len()
    }
}

/// Value and gradient over q of one objective term.
#[derive(Clone, Debug, PartialEq)]
pub struct TermValue {
    pub value: f64,
    pub gradient: DVector<f64>,
}

/// Stacked weighted residuals `r` and their Jacobian (row-major, m columns).
#[derive(Clone, Debug)]
pub struct Residuals {
    m: usize,
    with_jacobian: bool,
    r: Vec<f64>,
    jac: Vec<f64>,
}

impl Residuals {
    pub fn new(m: usize, with_jacobian: bool) -> Self {
        Self { m, with_jacobian, r: Vec::new(), jac: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Adds `weight * |residual|^2`.
    pub fn push3(&mut self, weight: f64, residual: Vector3<f64>, jac: impl FnOnce() -> Matrix3xX<f64>) {
        if weight == 0.0 {
            return;
        }
        let k = weight.sqrt();
        self.r.extend(residual.iter().map(|v| v * k));
        if self.with_jacobian {
            let j = jac();
            for row in 0..3 {
                self.jac.extend(j.row(row).iter().map(|v| v * k));
            }
        }
    }

    /// Adds `weight * residual^2` with a unit derivative on joint `col`.
    pub fn push_joint(&mut self, weight: f64, residual: f64, col: usize) {
        if weight == 0.0 {
            return;
        }
        let k = weight.sqrt();
        self.r.push(residual * k);
        if self.with_jacobian {
            let start = self.jac.len();
            self.jac.resize(start + self.m, 0.0);
            self.jac[start + col] = k;
        }
    }

    pub fn value(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum()
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.r)
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        assert!(self.with_jacobian, "residuals were assembled without a Jacobian");
        DMatrix::from_row_slice(self.r.len(), self.m, &self.jac)
    }

    /// `2 J^T r`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.m);
        if self.r.is_empty() {
            return g;
        }
        for (row, rv) in self.r.iter().enumerate() {
            let jrow = &self.jac[row * self.m..(row + 1) * self.m];
            for (gj, jv) in g.iter_mut().zip(jrow) {
                *gj += 2.0 * jv * rv;
            }
        }
        g
    }

    fn term_value(&self) -> TermValue {
        TermValue { value: self.value(), gradient: self.gradient() }
    }
}

/// Robot-side kinematic quantities with lazily cached position Jacobians.
struct RobotSide<'k, 'c> {
    kin: &'k Kinematics<'c>,
    cache: std::cell::RefCell<std::collections::HashMap<FrameRole, Matrix3xX<f64>>>,
}

impl<'k, 'c> RobotSide<'k, 'c> {
    fn new(kin: &'k Kinematics<'c>) -> Self {
        Self { kin, cache: Default::default() }
    }

    fn pos(&self, role: FrameRole) -> Result<Vector3<f64>> {
        self.kin.position(role)
    }

    fn jp(&self, role: FrameRole) -> Matrix3xX<f64> {
        self.cache
            .borrow_mut()
            .entry(role)
            .or_insert_with(|| self.kin.position_jacobian(role).expect("role validated with chain"))
            .clone()
    }

    /// Jacobian of `pos(a) - pos(b)`.
    fn jp_diff(&self, a: FrameRole, b: FrameRole) -> Matrix3xX<f64> {
        self.jp(a) - self.jp(b)
    }
}

fn check_fingers(target: &HandTarget, chain: &KinematicChain) -> Result<()> {
    if target.finger_count() != chain.finger_count() {
        return Err(Error::InvalidInput(format!(
            "human frame has {} fingers, chain has {}",
            target.finger_count(),
            chain.finger_count()
        )));
    }
    Ok(())
}

fn add_hand_pose(
    res: &mut Residuals,
    robot: &RobotSide,
    target: &HandTarget,
    cfg: &ObjectiveConfig,
    w_pos: f64,
    w_rot: f64,
) -> Result<()> {
    let (role, human) = match cfg.global_anchor {
        GlobalAnchor::ThumbTip => (FrameRole::ThumbTip, target.tips[0]),
        GlobalAnchor::WristPosition => (FrameRole::Wrist, target.wrist.position),
    };
    res.push3(w_pos, robot.pos(role)? - human, || robot.jp(role));

    // log(R_r R_h^T) moves with the world angular velocity of the robot
    // wrist; since w^T Jl^-1(w) = w^T, using the angular Jacobian directly
    // keeps 2 J^T r exact.
    let rot = robot.kin.pose(FrameRole::Wrist)?.orientation;
    let omega = rotation_log(&(rot * target.wrist.orientation.inverse()));
    res.push3(w_rot, omega, || robot.kin.angular_jacobian(FrameRole::Wrist).expect("wrist role"));
    Ok(())
}

fn add_fingertip_pos(res: &mut Residuals, robot: &RobotSide, target: &HandTarget, scale: f64) -> Result<()> {
    let wrist_r = robot.pos(FrameRole::Wrist)?;
    for i in 0..target.finger_count() {
        let tip = FrameRole::tip(i);
        let v_r = robot.pos(tip)? - wrist_r;
        let v_h = target.tips[i] - target.wrist.position;
        res.push3(scale * target.shape_weight[i], v_r - v_h, || robot.jp_diff(tip, FrameRole::Wrist));
    }
    Ok(())
}

fn add_pinch(res: &mut Residuals, robot: &RobotSide, target: &HandTarget, scale: f64) -> Result<()> {
    let thumb_r = robot.pos(FrameRole::ThumbTip)?;
    for i in 1..target.finger_count() {
        let tip = FrameRole::tip(i);
        let gamma_r = robot.pos(tip)? - thumb_r;
        res.push3(scale * target.pinch_weight[i], gamma_r - target.pinch_target[i], || {
            robot.jp_diff(tip, FrameRole::ThumbTip)
        });
    }
    Ok(())
}

fn add_fingertip_rot(
    res: &mut Residuals,
    robot: &RobotSide,
    target: &HandTarget,
    cfg: &ObjectiveConfig,
    scale: f64,
) -> Result<()> {
    for i in 0..target.finger_count() {
        let (head, tail, head_h, tail_h) = if cfg.fingertip_rot_uses_wrist_to_dip {
            (FrameRole::Dip(i), FrameRole::Wrist, target.dips[i], target.wrist.position)
        } else {
            (FrameRole::tip(i), FrameRole::Dip(i), target.tips[i], target.dips[i])
        };
        let r_r = robot.pos(head)? - robot.pos(tail)?;
        res.push3(scale, r_r - (head_h - tail_h), || robot.jp_diff(head, tail));
    }
    Ok(())
}

fn check_len(v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: v.len() });
    }
    Ok(())
}

fn add_joint_reg(res: &mut Residuals, q: &[f64], cfg: &ObjectiveConfig) -> Result<()> {
    check_len(q, cfg.w_pos.len())?;
    check_len(&cfg.q_bar, cfg.w_pos.len())?;
    for (j, (&w, (&qj, &qb))) in cfg.w_pos.iter().zip(q.iter().zip(&cfg.q_bar)).enumerate() {
        res.push_joint(w, qj - qb, j);
    }
    Ok(())
}

fn add_vel_reg(res: &mut Residuals, q: &[f64], q_prev: &[f64], cfg: &ObjectiveConfig) -> Result<()> {
    check_len(q, cfg.w_vel.len())?;
    check_len(q_prev, cfg.w_vel.len())?;
    for (j, (&w, (&qj, &qp))) in cfg.w_vel.iter().zip(q.iter().zip(q_prev)).enumerate() {
        res.push_joint(w, qj - qp, j);
    }
    Ok(())
}

/// `lambda1 |p_h - p_r|^2 + lambda2 angle^2(q_h, q_r)` on the configured anchor.
pub fn term_hand_pose(human: &HumanHandFrame, kin: &Kinematics, cfg: &ObjectiveConfig) -> Result<TermValue> {
    let target = HandTarget::new(human, cfg)?;
    let mut res = Residuals::new(kin.dof(), true);
    add_hand_pose(&mut res, &RobotSide::new(kin), &target, cfg, cfg.lambda.thumb_pos, cfg.lambda.wrist_rot)?;
    Ok(res.term_value())
}

/// Wrist-to-fingertip shape vectors weighted by s~(d_i).
pub fn term_fingertip_pos(human: &HumanHandFrame, kin: &Kinematics, cfg: &ObjectiveConfig) -> Result<TermValue> {
    let target = HandTarget::new(human, cfg)?;
    let mut res = Residuals::new(kin.dof(), true);
    add_fingertip_pos(&mut res, &RobotSide::new(kin), &target, 1.0)?;
    Ok(res.term_value())
}

/// Thumb-to-finger vectors against rescaled human pinch vectors.
pub fn term_pinch(human: &HumanHandFrame, kin: &Kinematics, cfg: &ObjectiveConfig) -> Result<TermValue> {
    let target = HandTarget::new(human, cfg)?;
    let mut res = Residuals::new(kin.dof(), true);
    add_pinch(&mut res, &RobotSide::new(kin), &target, 1.0)?;
    Ok(res.term_value())
}

/// DIP-to-tip vectors (or wrist-to-DIP when configured).
pub fn term_fingertip_rot(human: &HumanHandFrame, kin: &Kinematics, cfg: &ObjectiveConfig) -> Result<TermValue> {
    let target = HandTarget::new(human, cfg)?;
    let mut res = Residuals::new(kin.dof(), true);
    add_fingertip_rot(&mut res, &RobotSide::new(kin), &target, cfg, 1.0)?;
    Ok(res.term_value())
}

pub fn term_joint_reg(q: &[f64], cfg: &ObjectiveConfig) -> Result<TermValue> {
    let mut res = Residuals::new(q.len(), true);
    add_joint_reg(&mut res, q, cfg)?;
    Ok(res.term_value())
}

pub fn term_vel_reg(q: &[f64], q_prev: &[f64], cfg: &ObjectiveConfig) -> Result<TermValue> {
    let mut res = Residuals::new(q.len(), true);
    add_vel_reg(&mut res, q, q_prev, cfg)?;
    Ok(res.term_value())
}

/// Unweighted (by lambda) values of each term at one configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    /// Already carries lambda1 and lambda2.
    pub hand_pose: f64,
    pub fingertip_pos: f64,
    pub pinch: f64,
    pub fingertip_rot: f64,
    pub joint_reg: f64,
    pub vel_reg: f64,
}

/// A frame's objective, bound to one chain, config and previous state.
pub struct FrameObjective<'a> {
    chain: &'a KinematicChain,
    cfg: &'a ObjectiveConfig,
    target: HandTarget,
    q_prev: Vec<f64>,
}

impl<'a> FrameObjective<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        human: &HumanHandFrame,
        q_prev: &[f64],
        cfg: &'a ObjectiveConfig,
    ) -> Result<Self> {
        cfg.validate(chain.actuated_count())?;
        check_len(q_prev, chain.actuated_count())?;
        let target = HandTarget::new(human, cfg)?;
        check_fingers(&target, chain)?;
        Ok(Self { chain, cfg, target, q_prev: q_prev.to_vec() })
    }

    pub fn chain(&self) -> &KinematicChain {
        self.chain
    }

    pub fn target(&self) -> &HandTarget {
        &self.target
    }

    /// Weighted residual stack of every enabled term.
    pub fn residuals(&self, q: &[f64], with_jacobian: bool) -> Result<Residuals> {
        let kin = self.chain.kinematics(q)?;
        let robot = RobotSide::new(&kin);
        let cfg = self.cfg;
        let l = &cfg.lambda;
        let mut res = Residuals::new(q.len(), with_jacobian);
        add_hand_pose(&mut res, &robot, &self.target, cfg, l.thumb_pos, l.wrist_rot)?;
        add_fingertip_pos(&mut res, &robot, &self.target, l.fingertip_pos)?;
        if cfg.pinch_term {
            add_pinch(&mut res, &robot, &self.target, l.pinch)?;
        }
        if cfg.fingertip_rot_term {
            add_fingertip_rot(&mut res, &robot, &self.target, cfg, l.fingertip_rot)?;
        }
        if cfg.joint_reg {
            add_joint_reg(&mut res, q, cfg)?;
        }
        if cfg.vel_reg {
            add_vel_reg(&mut res, q, &self.q_prev, cfg)?;
        }
        Ok(res)
    }

    pub fn value(&self, q: &[f64]) -> Result<f64> {
        Ok(self.residuals(q, false)?.value())
    }

    pub fn value_and_gradient(&self, q: &[f64]) -> Result<TermValue> {
        Ok(self.residuals(q, true)?.term_value())
    }

    /// Every term evaluated on its own, enabled or not.
    pub fn breakdown(&self, q: &[f64]) -> Result<TermBreakdown> {
        let kin = self.chain.kinematics(q)?;
        let robot = RobotSide::new(&kin);
        let m = q.len();
        let run = |f: &dyn Fn(&mut Residuals) -> Result<()>| -> Result<f64> {
            let mut res = Residuals::new(m, false);
            f(&mut res)?;
            Ok(res.value())
        };
        let cfg = self.cfg;
        let t = &self.target;
        Ok(TermBreakdown {
            hand_pose: run(&|r| add_hand_pose(r, &robot, t, cfg, cfg.lambda.thumb_pos, cfg.lambda.wrist_rot))?,
            fingertip_pos: run(&|r| add_fingertip_pos(r, &robot, t, 1.0))?,
            pinch: run(&|r| add_pinch(r, &robot, t, 1.0))?,
            fingertip_rot: run(&|r| add_fingertip_rot(r, &robot, t, cfg, 1.0))?,
            joint_reg: run(&|r| add_joint_reg(r, q, cfg))?,
            vel_reg: run(&|r| add_vel_reg(r, q, &self.q_prev, cfg))?,
        })
    }
}

/// Full weighted objective and its gradient.
pub fn total_objective(
    human: &HumanHandFrame,
    q: &[f64],
    q_prev: &[f64],
    chain: &KinematicChain,
    cfg: &ObjectiveConfig,
) -> Result<TermValue> {
    FrameObjective::new(chain, human, q_prev, cfg)?.value_and_gradient(q)
}
