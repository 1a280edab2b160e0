//! URDF subset: `robot/link/joint` with revolute and fixed joints only.
//!
//! Link geometry (visual, collision, inertial) is ignored. Any other joint
//! type, `<mimic>` or `<transmission>` is rejected.

use nalgebra::Vector3;

use super::RoleMap;
use crate::error::{Error, Result};
use crate::model::{JointKind, JointSpec, KinematicChain, Pose};

fn floats<const N: usize>(text: Option<&str>, default: [f64; N], what: &str) -> Result<[f64; N]> {
    let Some(text) = text else { return Ok(default) };
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::InvalidChain(format!("{what}: expected {N} numbers, got `{text}`")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::InvalidChain(format!("{what}: `{p}` is not a number")))?;
    }
    Ok(out)
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn link_attr(joint: roxmltree::Node, tag: &str, name: &str) -> Result<String> {
    child(joint, tag)
        .and_then(|n| n.attribute("link"))
        .map(str::to_string)
        .ok_or_else(|| Error::InvalidChain(format!("joint `{name}` has no <{tag} link=...>")))
}

/// Parse URDF text into a chain whose semantic frames come from `roles`.
pub fn parse_urdf_subset(text: &str, roles: &RoleMap) -> Result<KinematicChain> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(Error::MalformedXml(format!(
            "root element is <{}>, expected <robot>",
            robot.tag_name().name()
        )));
    }
    let name = robot.attribute("name").unwrap_or("robot").to_string();

    let links: Vec<&str> = robot
        .children()
        .filter(|n| n.has_tag_name("link"))
        .map(|n| n.attribute("name").ok_or_else(|| Error::InvalidChain("<link> without name".into())))
        .collect::<Result<_>>()?;
    if robot.children().any(|n| n.has_tag_name("transmission")) {
        return Err(Error::UnsupportedJointType { joint: name, kind: "transmission".into() });
    }

    let mut joints = Vec::new();
    for node in robot.children().filter(|n| n.has_tag_name("joint")) {
        let jname = node
            .attribute("name")
            .ok_or_else(|| Error::InvalidChain("<joint> without name".into()))?
            .to_string();
        let kind = match node.attribute("type") {
            Some("revolute") => JointKind::Revolute,
            Some("fixed") => JointKind::Fixed,
            other => {
                return Err(Error::UnsupportedJointType {
                    joint: jname,
                    kind: other.unwrap_or("<missing>").to_string(),
                })
            }
        };
        if child(node, "mimic").is_some() {
            return Err(Error::UnsupportedJointType { joint: jname, kind: "mimic".into() });
        }
        let parent = link_attr(node, "parent", &jname)?;
        let child_link = link_attr(node, "child", &jname)?;
        for l in [&parent, &child_link] {
            if !links.contains(&l.as_str()) {
                return Err(Error::InvalidChain(format!("joint `{jname}` references undeclared link `{l}`")));
            }
        }

        let origin = child(node, "origin");
        let xyz = floats(origin.and_then(|o| o.attribute("xyz")), [0.0; 3], &format!("{jname} origin xyz"))?;
        let rpy = floats(origin.and_then(|o| o.attribute("rpy")), [0.0; 3], &format!("{jname} origin rpy"))?;
        let origin = Pose::from_xyz_rpy(xyz, rpy);

        let (axis, limits) = match kind {
            JointKind::Fixed => (Vector3::z(), None),
            JointKind::Revolute => {
                let raw = floats(child(node, "axis").and_then(|a| a.attribute("xyz")), [1.0, 0.0, 0.0], &format!("{jname} axis"))?;
                let axis = Vector3::from(raw);
                let norm = axis.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::InvalidChain(format!("joint `{jname}` has a zero axis")));
                }
                let limit = child(node, "limit").ok_or_else(|| Error::MissingLimit(jname.clone()))?;
                let bound = |attr: &str| -> Result<f64> {
                    let v = limit.attribute(attr).ok_or_else(|| Error::MissingLimit(jname.clone()))?;
                    v.parse()
                        .map_err(|_| Error::InvalidChain(format!("joint `{jname}` limit {attr} `{v}` is not a number")))
                };
                (axis / norm, Some([bound("lower")?, bound("upper")?]))
            }
        };
        joints.push(JointSpec { name: jname, kind, parent, child: child_link, origin, axis, limits });
    }

    KinematicChain::new(name, joints, roles.frames.clone(), roles.finger_count)
}
