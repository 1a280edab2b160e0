//! Named objective variants: the full objective, eight ablations, and two
//! approximations of earlier retargeting formulations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::KinematicChain;
use crate::objective::{GlobalAnchor, HumanHandFrame, Lambdas, ObjectiveConfig, PinchSwitch};
use crate::solver::{default_start, retarget_trajectory, settle, JointState, SolveReport, SolverSettings};

/// Number of arm joints leading every supported chain.
pub const ARM_JOINTS: usize = 7;

/// Robot hand a set of default hyper-parameters belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandProfile {
    /// 7-DoF arm + 16-DoF four-finger hand.
    Leap,
    /// 7-DoF arm + 24-DoF five-finger hand.
    Shadow,
}

impl HandProfile {
    pub fn actuated_count(&self) -> usize {
        match self {
            HandProfile::Leap => 23,
            HandProfile::Shadow => 31,
        }
    }

    pub fn from_actuated_count(m: usize) -> Option<Self> {
        [HandProfile::Leap, HandProfile::Shadow].into_iter().find(|p| p.actuated_count() == m)
    }

    fn hand_scale(&self) -> f64 {
        match self {
            HandProfile::Leap => 1.5,
            HandProfile::Shadow => 1.0,
        }
    }

    /// (joint, weight) pairs with nonzero position regularization.
    fn regularized(&self) -> &'static [(usize, f64)] {
        match self {
            HandProfile::Leap => &[(7, 0.5), (11, 0.5), (15, 0.5), (18, 0.5), (20, 0.1)],
            HandProfile::Shadow => &[(9, 0.5), (13, 0.5), (17, 0.5), (22, 0.5), (26, 0.1)],
        }
    }
}

impl FromStr for HandProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "leap" => Ok(HandProfile::Leap),
            "shadow" => Ok(HandProfile::Shadow),
            other => Err(Error::InvalidInput(format!("unknown hand profile `{other}`"))),
        }
    }
}

/// Full objective with the reference hyper-parameters of `profile`.
pub fn base_config(profile: HandProfile) -> ObjectiveConfig {
    let m = profile.actuated_count();
    let mut w_pos = vec![0.0; m];
    for &(j, w) in profile.regularized() {
        w_pos[j] = w;
    }
    let w_vel = (0..m).map(|j| if j < ARM_JOINTS { 0.1 } else { 0.01 }).collect();
    ObjectiveConfig {
        lambda: Lambdas { thumb_pos: 10.0, wrist_rot: 0.1, fingertip_pos: 1.0, fingertip_rot: 10.0, pinch: 10.0 },
        eps1: 0.1,
        eps2: 0.01,
        sigmoid_slope: 10.0,
        hand_scale: profile.hand_scale(),
        w_pos,
        w_vel,
        q_bar: vec![0.0; m],
        pinch_term: true,
        pinch_rescale: true,
        pinch_switch: PinchSwitch::Sigmoid,
        fingertip_rot_term: true,
        fingertip_rot_uses_wrist_to_dip: false,
        global_anchor: GlobalAnchor::ThumbTip,
        joint_reg: true,
        vel_reg: true,
        complementary_shape_weight: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PresetId {
    Full,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
    A8,
    DexMvLike,
    DexPilotLike,
}

impl PresetId {
    pub const ALL: [PresetId; 11] = [
        PresetId::Full,
        PresetId::A1,
        PresetId::A2,
        PresetId::A3,
        PresetId::A4,
        PresetId::A5,
        PresetId::A6,
        PresetId::A7,
        PresetId::A8,
        PresetId::DexMvLike,
        PresetId::DexPilotLike,
    ];

    /// Stable CLI-facing name.
    pub fn name(&self) -> &'static str {
        match self {
            PresetId::Full => "full",
            PresetId::A1 => "a1",
            PresetId::A2 => "a2",
            PresetId::A3 => "a3",
            PresetId::A4 => "a4",
            PresetId::A5 => "a5",
            PresetId::A6 => "a6",
            PresetId::A7 => "a7",
            PresetId::A8 => "a8",
            PresetId::DexMvLike => "dexmv",
            PresetId::DexPilotLike => "dexpilot",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            PresetId::Full => "all terms",
            PresetId::A1 => "no pinch term",
            PresetId::A2 => "pinch term without distance rescaling",
            PresetId::A3 => "no fingertip orientation term",
            PresetId::A4 => "orientation term on wrist-to-DIP vectors",
            PresetId::A5 => "wrist position anchor instead of thumb tip",
            PresetId::A6 => "wrist anchor, no pinch or orientation term",
            PresetId::A7 => "no joint position regularization",
            PresetId::A8 => "wrist anchor, no pinch, orientation or joint regularization",
            PresetId::DexMvLike => "wrist-to-DIP orientation, no pinch term",
            PresetId::DexPilotLike => "unrescaled pinch with step switching weights",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim().to_ascii_lowercase();
        PresetId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or(Error::UnknownPreset(s))
    }
}

fn drop_pinch(cfg: &mut ObjectiveConfig) {
    cfg.pinch_term = false;
    cfg.complementary_shape_weight = false;
}

/// `base` with exactly the fields of the preset's row changed.
pub fn preset(id: PresetId, base: &ObjectiveConfig) -> ObjectiveConfig {
    let mut cfg = base.clone();
    match id {
        PresetId::Full => {}
        PresetId::A1 => drop_pinch(&mut cfg),
        PresetId::A2 => cfg.pinch_rescale = false,
        PresetId::A3 => cfg.fingertip_rot_term = false,
        PresetId::A4 => cfg.fingertip_rot_uses_wrist_to_dip = true,
        PresetId::A5 => cfg.global_anchor = GlobalAnchor::WristPosition,
        PresetId::A6 => {
            cfg.global_anchor = GlobalAnchor::WristPosition;
            drop_pinch(&mut cfg);
            cfg.fingertip_rot_term = false;
        }
        PresetId::A7 => cfg.joint_reg = false,
        PresetId::A8 => {
            cfg.global_anchor = GlobalAnchor::WristPosition;
            drop_pinch(&mut cfg);
            cfg.fingertip_rot_term = false;
            cfg.joint_reg = false;
        }
        PresetId::DexMvLike => {
            cfg.fingertip_rot_uses_wrist_to_dip = true;
            drop_pinch(&mut cfg);
        }
        PresetId::DexPilotLike => {
            cfg.pinch_rescale = false;
            cfg.pinch_switch = PinchSwitch::Step;
        }
    }
    cfg
}

/// How a preset is run over a recorded trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub settings: SolverSettings,
    /// Start from a converged solve of the first frame instead of the
    /// default start configuration.
    pub settle_start: bool,
}

impl Protocol {
    /// Offline comparison: settled start and no output smoothing, so the
    /// errors reflect the objective rather than start-up or filter lag.
    pub fn offline() -> Self {
        Self { settings: SolverSettings { ema_alpha: 1.0, ..SolverSettings::default() }, settle_start: true }
    }

    /// Deployment behaviour: default start and the reference smoothing.
    pub fn online() -> Self {
        Self { settings: SolverSettings::default(), settle_start: false }
    }
}

#[derive(Clone, Debug)]
pub struct PresetRun {
    pub preset: PresetId,
    pub states: Vec<JointState>,
    pub reports: Vec<SolveReport>,
    pub metrics: MetricsReport,
}

/// Start configuration a protocol uses for `frames`.
pub fn start_state(
    chain: &KinematicChain,
    frames: &[HumanHandFrame],
    cfg: &ObjectiveConfig,
    protocol: &Protocol,
) -> Result<JointState> {
    let q0 = default_start(chain, cfg);
    match frames.first() {
        Some(first) if protocol.settle_start => settle(chain, first, &q0, cfg, &protocol.settings),
        Some(_) => Ok(q0),
        None => Err(Error::NoFrames),
    }
}

/// Retarget `frames` with one preset and evaluate the result.
pub fn run_preset(
    chain: &KinematicChain,
    frames: &[HumanHandFrame],
    base: &ObjectiveConfig,
    id: PresetId,
    protocol: &Protocol,
    selection: &BTreeSet<usize>,
) -> Result<PresetRun> {
    let cfg = preset(id, base);
    let q0 = start_state(chain, frames, &cfg, protocol)?;
    let (states, reports) = retarget_trajectory(chain, frames, &cfg, &q0, &protocol.settings)?;
    let metrics = evaluate(chain, frames, &states, &cfg, selection)?;
    Ok(PresetRun { preset: id, states, reports, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_weights() {
        let cfg = base_config(HandProfile::Leap);
        let nonzero: Vec<(usize, f64)> =
            cfg.w_pos.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(j, w)| (j, *w)).collect();
        assert_eq!(nonzero, vec![(7, 0.5), (11, 0.5), (15, 0.5), (18, 0.5), (20, 0.1)]);
        assert!(cfg.w_vel[..7].iter().all(|w| *w == 0.1));
        assert!(cfg.w_vel[7..].iter().all(|w| *w == 0.01));
        assert_eq!(cfg.hand_scale, 1.5);
        assert_eq!(base_config(HandProfile::Shadow).hand_scale, 1.0);
        assert_eq!(base_config(HandProfile::Shadow).w_pos[26], 0.1);
    }

    #[test]
    fn names_round_trip() {
        for id in PresetId::ALL {
            assert_eq!(id.name().parse::<PresetId>().unwrap(), id);
        }
        assert!("a9".parse::<PresetId>().is_err());
    }

    #[test]
    fn rows_change_only_their_fields() {
        let base = base_config(HandProfile::Leap);
        let expect: [(PresetId, &[&str]); 11] = [
            (PresetId::Full, &[]),
            (PresetId::A1, &["pinch_term", "complementary_shape_weight"]),
            (PresetId::A2, &["pinch_rescale"]),
            (PresetId::A3, &["fingertip_rot_term"]),
            (PresetId::A4, &["fingertip_rot_uses_wrist_to_dip"]),
            (PresetId::A5, &["global_anchor"]),
            (PresetId::A6, &["pinch_term", "fingertip_rot_term", "global_anchor", "complementary_shape_weight"]),
            (PresetId::A7, &["joint_reg"]),
            (PresetId::A8, &["pinch_term", "fingertip_rot_term", "global_anchor", "joint_reg", "complementary_shape_weight"]),
            (PresetId::DexMvLike, &["pinch_term", "fingertip_rot_uses_wrist_to_dip", "complementary_shape_weight"]),
            (PresetId::DexPilotLike, &["pinch_rescale", "pinch_switch"]),
        ];
        for (id, fields) in expect {
            assert_eq!(preset(id, &base).diff(&base), fields, "{id}");
        }
    }

    #[test]
    fn a6_composes_from_a5() {
        let base = base_config(HandProfile::Leap);
        let mut a6 = preset(PresetId::A5, &base);
        a6.pinch_term = false;
        a6.complementary_shape_weight = false;
        a6.fingertip_rot_term = false;
        assert_eq!(a6, preset(PresetId::A6, &base));
    }

    #[test]
    fn pinch_removal_forces_unit_shape_weight() {
        let base = base_config(HandProfile::Leap);
        for id in [PresetId::A1, PresetId::A6, PresetId::A8, PresetId::DexMvLike] {
            let cfg = preset(id, &base);
            assert!(!cfg.pinch_term && !cfg.complementary_shape_weight);
            assert_eq!(cfg.shape_weight(0.0), 1.0);
        }
        assert!(preset(PresetId::A7, &base).vel_reg);
    }
}
