//! Kinematic tree of revolute/fixed joints, forward kinematics and frame
//! Jacobians for the task frames the retargeting objective reads.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix3xX, Matrix6xX, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Tolerance on axis and quaternion norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Rigid pose in the world (or parent) frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// URDF-style origin: translation plus fixed-axis roll/pitch/yaw
    /// (R = Rz(yaw) * Ry(pitch) * Rx(roll)).
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Vector3::from(xyz),
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::from_isometry(&(self.to_isometry() * other.to_isometry()))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }
}

/// Semantic task frames. Finger index 0 is the thumb; 1..N are the primary
/// fingers (index, middle, ring, little).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrameRole {
    Wrist,
    ThumbTip,
    Fingertip(usize),
    Dip(usize),
}

impl FrameRole {
    /// Tip frame of finger `i`, thumb included.
    pub fn tip(finger: usize) -> Self {
        if finger == 0 {
            FrameRole::ThumbTip
        } else {
            FrameRole::Fingertip(finger)
        }
    }

    /// Every role a chain with `finger_count` fingers must resolve.
    pub fn required(finger_count: usize) -> Vec<FrameRole> {
        let mut roles = vec![FrameRole::Wrist, FrameRole::ThumbTip];
        roles.extend((1..finger_count).map(FrameRole::Fingertip));
        roles.extend((0..finger_count).map(FrameRole::Dip));
        roles
    }
}

impl fmt::Display for FrameRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameRole::Wrist => write!(f, "wrist"),
            FrameRole::ThumbTip => write!(f, "thumb_tip"),
            FrameRole::Fingertip(i) => write!(f, "fingertip_{i}"),
            FrameRole::Dip(i) => write!(f, "dip_{i}"),
        }
    }
}

impl FromStr for FrameRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str| -> Option<usize> { s.strip_prefix(prefix)?.parse().ok() };
        match s {
            "wrist" => Ok(FrameRole::Wrist),
            "thumb_tip" => Ok(FrameRole::ThumbTip),
            _ => {
                if let Some(i) = indexed("fingertip_").filter(|&i| i > 0) {
                    Ok(FrameRole::Fingertip(i))
                } else if let Some(i) = indexed("dip_") {
                    Ok(FrameRole::Dip(i))
                } else {
                    Err(Error::UnknownRole(s.to_string()))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Fixed,
}

impl JointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Fixed => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    /// Child joint frame expressed in the parent link frame.
    pub origin: Pose,
    /// Rotation axis in the joint frame (unit norm for revolute joints).
    pub axis: Vector3<f64>,
    /// `[lower, upper]` in radians; `None` for fixed joints.
    pub limits: Option<[f64; 2]>,
}

impl JointSpec {
    pub fn revolute(
        name: &str,
        parent: &str,
        child: &str,
        origin: Pose,
        axis: Vector3<f64>,
        limits: [f64; 2],
    ) -> Self {
        Self {
            name: name.to_string(),
            kind: JointKind::Revolute,
            parent: parent.to_string(),
            child: child.to_string(),
            origin,
            axis,
            limits: Some(limits),
        }
    }

    pub fn fixed(name: &str, parent: &str, child: &str, origin: Pose) -> Self {
        Self {
            name: name.to_string(),
            kind: JointKind::Fixed,
            parent: parent.to_string(),
            child: child.to_string(),
            origin,
            axis: Vector3::z(),
            limits: None,
        }
    }
}

/// Validated arm+hand kinematic tree.
///
/// Actuated joints are numbered in declaration order; that numbering is the
/// layout of every joint vector `q` handled by the crate.
#[derive(Clone, Debug)]
pub struct KinematicChain {
    name: String,
    joints: Vec<JointSpec>,
    finger_count: usize,
    frames: BTreeMap<FrameRole, String>,

    links: Vec<String>,
    root: usize,
    /// Joint indices in parent-before-child order.
    order: Vec<usize>,
    joint_parent: Vec<usize>,
    joint_child: Vec<usize>,
    /// Actuated index of each joint (None for fixed joints).
    joint_actuated: Vec<Option<usize>>,
    /// Joint index for each actuated index.
    actuated: Vec<usize>,
    /// Actuated indices on the root-to-link path, per link.
    ancestors: Vec<Vec<usize>>,
    role_links: BTreeMap<FrameRole, usize>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        frames: BTreeMap<FrameRole, String>,
        finger_count: usize,
    ) -> Result<Self> {
        if finger_count < 2 {
            return Err(Error::InvalidChain(format!(
                "finger_count must be at least 2, got {finger_count}"
            )));
        }

        let mut names = HashMap::new();
        for (i, j) in joints.iter().enumerate() {
            if names.insert(j.name.as_str(), i).is_some() {
                return Err(Error::InvalidChain(format!("duplicate joint name `{}`", j.name)));
            }
            match j.kind {
                JointKind::Revolute => {
                    let n = j.axis.norm();
                    if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(Error::InvalidChain(format!(
                            "joint `{}` axis norm {n} is not 1",
                            j.name
                        )));
                    }
                    let [lo, hi] = j.limits.ok_or_else(|| Error::MissingLimit(j.name.clone()))?;
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::InvalidChain(format!(
                            "joint `{}` limits [{lo}, {hi}] are not ordered",
                            j.name
                        )));
                    }
                }
                JointKind::Fixed => {}
            }
            if (j.origin.orientation.norm() - 1.0).abs() > UNIT_NORM_TOL
                || !j.origin.position.iter().all(|v| v.is_finite())
            {
                return Err(Error::InvalidChain(format!("joint `{}` origin is invalid", j.name)));
            }
        }

        let mut links: Vec<String> = Vec::new();
        let mut link_index: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, links: &mut Vec<String>| -> usize {
            *link_index.entry(name.to_string()).or_insert_with(|| {
                links.push(name.to_string());
                links.len() - 1
            })
        };
        let mut joint_parent = Vec::with_capacity(joints.len());
        let mut joint_child = Vec::with_capacity(joints.len());
        for j in &joints {
            joint_parent.push(intern(&j.parent, &mut links));
            joint_child.push(intern(&j.child, &mut links));
        }
        if links.is_empty() {
            return Err(Error::InvalidChain("chain has no joints".into()));
        }

        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        for (ji, &c) in joint_child.iter().enumerate() {
            if parent_joint[c].replace(ji).is_some() {
                return Err(Error::InvalidChain(format!(
                    "link `{}` has more than one parent joint",
                    links[c]
                )));
            }
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&l| parent_joint[l].is_none()).collect();
        let root = match roots.as_slice() {
            [] => return Err(Error::Cycle(links[joint_child[0]].clone())),
            [r] => *r,
            many => {
                return Err(Error::InvalidChain(format!(
                    "chain has {} roots ({}), expected one",
                    many.len(),
                    many.iter().map(|&l| links[l].as_str()).collect::<Vec<_>>().join(", ")
                )))
            }
        };

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (ji, &p) in joint_parent.iter().enumerate() {
            children[p].push(ji);
        }
        let mut order = Vec::with_capacity(joints.len());
        let mut queue = VecDeque::from([root]);
        let mut reached = vec![false; links.len()];
        reached[root] = true;
        while let Some(l) = queue.pop_front() {
            for &ji in &children[l] {
                let c = joint_child[ji];
                if reached[c] {
                    return Err(Error::Cycle(links[c].clone()));
                }
                reached[c] = true;
                order.push(ji);
                queue.push_back(c);
            }
        }
        if let Some(l) = reached.iter().position(|r| !r) {
            return Err(Error::Cycle(links[l].clone()));
        }

        let mut joint_actuated = vec![None; joints.len()];
        let mut actuated = Vec::new();
        for (ji, j) in joints.iter().enumerate() {
            if j.kind == JointKind::Revolute {
                joint_actuated[ji] = Some(actuated.len());
                actuated.push(ji);
            }
        }

        let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for &ji in &order {
            let mut path = ancestors[joint_parent[ji]].clone();
            if let Some(a) = joint_actuated[ji] {
                path.push(a);
            }
            ancestors[joint_child[ji]] = path;
        }

        let mut role_links = BTreeMap::new();
        for role in FrameRole::required(finger_count) {
            let link = frames.get(&role).ok_or_else(|| Error::UnresolvedRole {
                role: role.to_string(),
                reason: "missing from the role map".into(),
            })?;
            let li = *link_index.get(link).ok_or_else(|| Error::UnresolvedRole {
                role: role.to_string(),
                reason: format!("link `{link}` not in chain"),
            })?;
            role_links.insert(role, li);
        }
        if let Some(extra) = frames.keys().find(|r| !role_links.contains_key(r)) {
            return Err(Error::UnresolvedRole {
                role: extra.to_string(),
                reason: format!("role is outside a {finger_count}-finger hand"),
            });
        }

        Ok(Self {
            name: name.into(),
            joints,
            finger_count,
            frames,
            links,
            root,
            order,
            joint_parent,
            joint_child,
            joint_actuated,
            actuated,
            ancestors,
            role_links,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn frames(&self) -> &BTreeMap<FrameRole, String> {
        &self.frames
    }

    pub fn finger_count(&self) -> usize {
        self.finger_count
    }

    /// Dimension `m` of the joint vector.
    pub fn actuated_count(&self) -> usize {
        self.actuated.len()
    }

    pub fn root_link(&self) -> &str {
        &self.links[self.root]
    }

    pub fn actuated_names(&self) -> Vec<&str> {
        self.actuated.iter().map(|&ji| self.joints[ji].name.as_str()).collect()
    }

    /// Lower and upper bounds of the actuated joints.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.actuated
            .iter()
            .map(|&ji| {
                let [lo, hi] = self.joints[ji].limits.expect("revolute joints carry limits");
                (lo, hi)
            })
            .unzip()
    }

    /// Midpoint of every joint range.
    pub fn mid_range(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, &ji) in q.iter_mut().zip(&self.actuated) {
            let [lo, hi] = self.joints[ji].limits.expect("revolute joints carry limits");
            *v = v.clamp(lo, hi);
        }
    }

    /// Actuated indices on the path from the root to `role`'s link.
    pub fn path_joints(&self, role: FrameRole) -> Result<&[usize]> {
        let li = self.role_link(role)?;
        Ok(&self.ancestors[li])
    }

    fn role_link(&self, role: FrameRole) -> Result<usize> {
        self.role_links
            .get(&role)
            .copied()
            .ok_or_else(|| Error::UnknownRole(role.to_string()))
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.actuated_count() {
            return Err(Error::DimensionMismatch { expected: self.actuated_count(), got: q.len() });
        }
        Ok(())
    }

    /// Evaluate every link transform at `q`.
    pub fn kinematics(&self, q: &[f64]) -> Result<Kinematics<'_>> {
        self.check_dim(q)?;
        let mut links = vec![Isometry3::identity(); self.links.len()];
        let mut axes = vec![(Vector3::zeros(), Vector3::zeros()); self.actuated.len()];
        for &ji in &self.order {
            let joint = &self.joints[ji];
            let frame = links[self.joint_parent[ji]] * joint.origin.to_isometry();
            links[self.joint_child[ji]] = match self.joint_actuated[ji] {
                Some(a) => {
                    let axis_world = frame.rotation * joint.axis;
                    axes[a] = (frame.translation.vector, axis_world);
                    let turn = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(joint.axis), q[a]);
                    frame * turn
                }
                None => frame,
            };
        }
        Ok(Kinematics { chain: self, links, axes })
    }
}

/// Link transforms of one configuration, with Jacobian queries on top.
pub struct Kinematics<'a> {
    chain: &'a KinematicChain,
    links: Vec<Isometry3<f64>>,
    /// World position and unit axis of each actuated joint.
    axes: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl Kinematics<'_> {
    /// Number of actuated joints.
    pub fn dof(&self) -> usize {
        self.axes.len()
    }

    pub fn pose(&self, role: FrameRole) -> Result<Pose> {
        Ok(Pose::from_isometry(&self.links[self.chain.role_link(role)?]))
    }

    pub fn position(&self, role: FrameRole) -> Result<Vector3<f64>> {
        Ok(self.links[self.chain.role_link(role)?].translation.vector)
    }

    pub fn link_pose(&self, link: &str) -> Option<Pose> {
        let li = self.chain.links.iter().position(|l| l == link)?;
        Some(Pose::from_isometry(&self.links[li]))
    }

    /// Linear velocity rows (3 x m) of `role`.
    pub fn position_jacobian(&self, role: FrameRole) -> Result<Matrix3xX<f64>> {
        let li = self.chain.role_link(role)?;
        let p = self.links[li].translation.vector;
        let mut jac = Matrix3xX::zeros(self.axes.len());
        for &a in &self.chain.ancestors[li] {
            let (o, axis) = &self.axes[a];
            jac.set_column(a, &axis.cross(&(p - o)));
        }
        Ok(jac)
    }

    /// Angular velocity rows (3 x m) of `role`.
    pub fn angular_jacobian(&self, role: FrameRole) -> Result<Matrix3xX<f64>> {
        let li = self.chain.role_link(role)?;
        let mut jac = Matrix3xX::zeros(self.axes.len());
        for &a in &self.chain.ancestors[li] {
            jac.set_column(a, &self.axes[a].1);
        }
        Ok(jac)
    }

    /// Full 6 x m geometric Jacobian, linear rows first.
    pub fn jacobian(&self, role: FrameRole) -> Result<Matrix6xX<f64>> {
        let lin = self.position_jacobian(role)?;
        let ang = self.angular_jacobian(role)?;
        let mut jac = Matrix6xX::zeros(self.axes.len());
        jac.fixed_rows_mut::<3>(0).copy_from(&lin);
        jac.fixed_rows_mut::<3>(3).copy_from(&ang);
        Ok(jac)
    }
}

/// World poses of every named frame at `q`.
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<BTreeMap<FrameRole, Pose>> {
    let kin = chain.kinematics(q)?;
    chain
        .role_links
        .keys()
        .map(|&role| Ok((role, kin.pose(role)?)))
        .collect()
}

/// 6 x m Jacobian of `role` at `q`: linear rows in m/rad, angular rows in rad/rad.
pub fn frame_jacobian(chain: &KinematicChain, q: &[f64], role: FrameRole) -> Result<Matrix6xX<f64>> {
    chain.kinematics(q)?.jacobian(role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn roles_on(link: &str) -> BTreeMap<FrameRole, String> {
        FrameRole::required(2).into_iter().map(|r| (r, link.to_string())).collect()
    }

    fn single_joint() -> KinematicChain {
        let joints = vec![
            JointSpec::revolute("j", "base", "l1", Pose::identity(), Vector3::z(), [-3.0, 3.0]),
            JointSpec::fixed("tip", "l1", "l2", Pose::from_translation(1.0, 0.0, 0.0)),
        ];
        KinematicChain::new("one", joints, roles_on("l2"), 2).unwrap()
    }

    #[test]
    fn quarter_turn_moves_child_onto_y() {
        let chain = single_joint();
        let fk = forward_kinematics(&chain, &[FRAC_PI_2]).unwrap();
        let p = fk[&FrameRole::Wrist].position;
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn textbook_single_joint_jacobian() {
        let chain = single_joint();
        let jac = frame_jacobian(&chain, &[0.0], FrameRole::ThumbTip).unwrap();
        assert_eq!(jac.column(0).as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_configuration_is_cumulative_origin() {
        let joints = vec![
            JointSpec::revolute("a", "base", "l1", Pose::from_translation(0.0, 0.0, 0.5), Vector3::x(), [-1.0, 1.0]),
            JointSpec::fixed("b", "l1", "l2", Pose::from_translation(0.2, 0.0, 0.0)),
            JointSpec::revolute("c", "l2", "l3", Pose::from_translation(0.0, 0.3, 0.0), Vector3::y(), [-1.0, 1.0]),
        ];
        let chain = KinematicChain::new("c", joints, roles_on("l3"), 2).unwrap();
        let fk = forward_kinematics(&chain, &[0.0, 0.0]).unwrap();
        assert!((fk[&FrameRole::Wrist].position - Vector3::new(0.2, 0.3, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let chain = single_joint();
        assert!(matches!(
            forward_kinematics(&chain, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn rejects_cycles_and_bad_limits() {
        let joints = vec![
            JointSpec::fixed("a", "base", "l1", Pose::identity()),
            JointSpec::fixed("b", "l1", "l2", Pose::identity()),
            JointSpec::fixed("c", "l2", "l1", Pose::identity()),
        ];
        assert!(KinematicChain::new("x", joints, roles_on("l2"), 2).is_err());

        let joints = vec![JointSpec::revolute("a", "base", "l1", Pose::identity(), Vector3::z(), [1.0, -1.0])];
        assert!(KinematicChain::new("x", joints, roles_on("l1"), 2).is_err());

        let joints = vec![JointSpec::revolute("a", "base", "l1", Pose::identity(), Vector3::new(0.0, 0.0, 2.0), [-1.0, 1.0])];
        assert!(KinematicChain::new("x", joints, roles_on("l1"), 2).is_err());
    }

    #[test]
    fn unresolved_role_fails_at_construction() {
        let joints = vec![JointSpec::fixed("a", "base", "l1", Pose::identity())];
        let mut roles = roles_on("l1");
        roles.insert(FrameRole::Dip(1), "nowhere".into());
        assert!(matches!(
            KinematicChain::new("x", joints, roles, 2),
            Err(Error::UnresolvedRole { .. })
        ));
    }

    #[test]
    fn role_names_round_trip() {
        for role in FrameRole::required(5) {
            assert_eq!(role.to_string().parse::<FrameRole>().unwrap(), role);
        }
        assert!("fingertip_0".parse::<FrameRole>().is_err());
        assert!("palm".parse::<FrameRole>().is_err());
    }
}
