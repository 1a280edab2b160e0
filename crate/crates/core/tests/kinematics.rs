use dexretarget::io::{builtin_chain, emit_chain_json, parse_chain_json, RoleMap};
use dexretarget::{forward_kinematics, frame_jacobian, parse_urdf_subset, FrameRole, HandProfile, KinematicChain};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use serde_json::Value;

const LEAP_URDF: &str = include_str!("../assets/panda_leap.urdf");
const LEAP_ROLES: &str = include_str!("../assets/panda_leap.roles.json");

fn chains() -> [(&'static str, KinematicChain); 2] {
    [
        ("panda_leap", builtin_chain(HandProfile::Leap).unwrap()),
        ("panda_shadow", builtin_chain(HandProfile::Shadow).unwrap()),
    ]
}

fn random_q(chain: &KinematicChain, seed: u64) -> Vec<f64> {
    let (lo, hi) = chain.bounds();
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (s >> 11) as f64 / (1u64 << 53) as f64;
            l + u * (h - l)
        })
        .collect()
}

#[test]
fn forward_kinematics_matches_frozen_oracle() {
    let oracle: Value = serde_json::from_str(include_str!("oracles/fk_oracle.json")).unwrap();
    for (name, chain) in chains() {
        let entry = &oracle[name];
        assert_eq!(entry["actuated_count"].as_u64().unwrap() as usize, chain.actuated_count());
        for case in entry["cases"].as_array().unwrap() {
            let q: Vec<f64> = serde_json::from_value(case["q"].clone()).unwrap();
            let poses = forward_kinematics(&chain, &q).unwrap();
            for (role, expected) in case["frames"].as_object().unwrap() {
                let pose = poses[&role.parse::<FrameRole>().unwrap()];
                let p: [f64; 3] = serde_json::from_value(expected["position"].clone()).unwrap();
                let r: [[f64; 3]; 3] = serde_json::from_value(expected["rotation"].clone()).unwrap();
                let r = Matrix3::from_fn(|i, j| r[i][j]);
                assert!((pose.position - Vector3::from(p)).amax() < 1e-12, "{name} {role} position");
                assert!((pose.orientation.to_rotation_matrix().matrix() - r).amax() < 1e-12, "{name} {role} rotation");
            }
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let h = 1e-6;
    for (name, chain) in chains() {
        for seed in 0..3 {
            let q = random_q(&chain, seed);
            for role in chain.frames().keys().copied() {
                let jac = frame_jacobian(&chain, &q, role).unwrap();
                let at = |q: &[f64]| forward_kinematics(&chain, q).unwrap()[&role];
                for j in 0..q.len() {
                    let (mut qp, mut qm) = (q.clone(), q.clone());
                    qp[j] += h;
                    qm[j] -= h;
                    let (a, b) = (at(&qp), at(&qm));
                    let dp = (a.position - b.position) / (2.0 * h);
                    let dw = (a.orientation * b.orientation.inverse()).scaled_axis() / (2.0 * h);
                    let lin = jac.fixed_view::<3, 1>(0, j);
                    let ang = jac.fixed_view::<3, 1>(3, j);
                    assert!((lin - dp).amax() < 1e-7, "{name} {role} joint {j} linear");
                    assert!((ang - dw).amax() < 1e-7, "{name} {role} joint {j} angular");
                }
            }
        }
    }
}

#[test]
fn urdf_to_native_json_preserves_kinematics() {
    let roles = RoleMap::from_json(LEAP_ROLES).unwrap();
    let from_urdf = parse_urdf_subset(LEAP_URDF, &roles).unwrap();
    let text = emit_chain_json(&from_urdf).unwrap();
    let from_json = parse_chain_json(&text).unwrap();
    assert_eq!(emit_chain_json(&from_json).unwrap(), text);
    assert_eq!(from_json.actuated_names(), from_urdf.actuated_names());
    for seed in 0..10 {
        let q = random_q(&from_urdf, 100 + seed);
        let (a, b) = (forward_kinematics(&from_urdf, &q).unwrap(), forward_kinematics(&from_json, &q).unwrap());
        for (role, pa) in &a {
            let pb = b[role];
            assert!((pa.position - pb.position).amax() <= 1e-12);
            assert!(pa.orientation.angle_to(&pb.orientation) <= 1e-12);
        }
    }
}

#[test]
fn joint_limits_clamp_into_the_box() {
    let chain = builtin_chain(HandProfile::Leap).unwrap();
    let (lo, hi) = chain.bounds();
    let mut q: Vec<f64> = lo.iter().map(|l| l - 1.0).collect();
    chain.clamp(&mut q);
    assert_eq!(q, lo);
    let mut q: Vec<f64> = hi.iter().map(|h| h + 1.0).collect();
    chain.clamp(&mut q);
    assert_eq!(q, hi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_orientations_are_unit_and_consistent(seed in any::<u64>()) {
        let chain = builtin_chain(HandProfile::Leap).unwrap();
        let q = random_q(&chain, seed);
        let kin = chain.kinematics(&q).unwrap();
        for role in chain.frames().keys().copied() {
            let pose = kin.pose(role).unwrap();
            prop_assert!((pose.orientation.quaternion().norm() - 1.0).abs() < 1e-12);
            prop_assert_eq!(pose.position, kin.position(role).unwrap());
        }
    }

    #[test]
    fn rpy_origins_follow_the_fixed_axis_convention(r in -3.0f64..3.0, p in -1.5f64..1.5, y in -3.0f64..3.0) {
        let pose = dexretarget::Pose::from_xyz_rpy([0.0; 3], [r, p, y]);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), y)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), p)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), r);
        prop_assert!(pose.orientation.angle_to(&expected) < 1e-12);
    }
}
