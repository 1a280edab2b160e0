//! Shared argument groups and their resolution into library values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use dexretarget::io::{builtin_chain, load_chain, load_trajectory_file, Trajectory};
use dexretarget::objective::Lambdas;
use dexretarget::{base_config, HandProfile, KinematicChain, ObjectiveConfig, Protocol};
use serde::{Deserialize, Serialize};

#[derive(Args, Clone, Debug)]
pub struct ChainArgs {
    /// Robot description: native JSON, URDF (with a role map), or
    /// `builtin:leap` / `builtin:shadow`.
    #[arg(long)]
    pub chain: String,
    /// Frame-role map for a URDF chain [default: <urdf stem>.roles.json].
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Hand profile for the reference hyper-parameters [default: inferred
    /// from the number of actuated joints].
    #[arg(long)]
    pub hand: Option<String>,
}

pub struct LoadedChain {
    pub chain: KinematicChain,
    pub profile: HandProfile,
}

impl ChainArgs {
    pub fn load(&self) -> Result<LoadedChain> {
        let chain = match self.chain.strip_prefix("builtin:") {
            Some(name) => builtin_chain(name.parse()?)?,
            None => load_chain(Path::new(&self.chain), self.roles.as_deref())
                .with_context(|| format!("loading chain {}", self.chain))?,
        };
        let m = chain.actuated_count();
        let profile = match &self.hand {
            Some(name) => {
                let p: HandProfile = name.parse()?;
                if p.actuated_count() != m {
                    bail!("hand profile {name} expects {} joints, chain has {m}", p.actuated_count());
                }
                p
            }
            None => HandProfile::from_actuated_count(m)
                .with_context(|| format!("cannot infer a hand profile for {m} joints; pass --hand"))?,
        };
        Ok(LoadedChain { chain, profile })
    }
}

pub fn read_trajectory(path: &Path, chain: &KinematicChain) -> Result<Trajectory> {
    let traj = load_trajectory_file(path).with_context(|| format!("loading trajectory {}", path.display()))?;
    if traj.header.finger_count != chain.finger_count() {
        bail!(
            "trajectory has {} fingers, chain has {}",
            traj.header.finger_count,
            chain.finger_count()
        );
    }
    Ok(traj)
}

pub fn trajectory_name(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("trajectory");
    name.split('.').next().unwrap_or(name).to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Settled start, no output smoothing.
    Offline,
    /// Default start, reference smoothing.
    Online,
}

/// Hyper-parameters overridable by flag or config file. Unset values keep
/// the reference defaults.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunables {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Scale applied to human keypoints about the wrist.
    #[arg(long)]
    pub hand_scale: Option<f64>,
    /// Term weights: thumb_pos,wrist_rot,fingertip_pos,fingertip_rot,pinch.
    #[arg(long, value_delimiter = ',', num_args = 5)]
    pub lambda: Option<Vec<f64>>,
    /// Pinch activation distance (m).
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Pinch contact distance (m).
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Switching sigmoid slope.
    #[arg(long)]
    pub sigmoid_slope: Option<f64>,
    /// Output smoothing factor (1 disables smoothing).
    #[arg(long)]
    pub ema_alpha: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub step_tol: Option<f64>,
    /// Objective evaluations per frame.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Evaluation protocol.
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolKind>,
    /// Start from a converged solve of the first frame.
    #[arg(long)]
    pub settle_start: Option<bool>,
}

/// Fully resolved hyper-parameters, recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub hand: HandProfile,
    pub base: ObjectiveConfig,
    pub protocol: Protocol,
}

impl Tunables {
    /// Flags take precedence over the config file.
    pub fn merged(&self) -> Result<Tunables> {
        let Some(path) = &self.config else { return Ok(self.clone()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Tunables =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Tunables {
            config: self.config.clone(),
            hand_scale: self.hand_scale.or(file.hand_scale),
            lambda: self.lambda.clone().or(file.lambda),
            eps1: self.eps1.or(file.eps1),
            eps2: self.eps2.or(file.eps2),
            sigmoid_slope: self.sigmoid_slope.or(file.sigmoid_slope),
            ema_alpha: self.ema_alpha.or(file.ema_alpha),
            grad_tol: self.grad_tol.or(file.grad_tol),
            step_tol: self.step_tol.or(file.step_tol),
            max_iter: self.max_iter.or(file.max_iter),
            protocol: self.protocol.or(file.protocol),
            settle_start: self.settle_start.or(file.settle_start),
        })
    }

    pub fn resolve(&self, hand: HandProfile, default_protocol: ProtocolKind) -> Result<Resolved> {
        let t = self.merged()?;
        let mut base = base_config(hand);
        if let Some(v) = t.hand_scale {
            base.hand_scale = v;
        }
        if let Some(l) = &t.lambda {
            base.lambda = Lambdas { thumb_pos: l[0], wrist_rot: l[1], fingertip_pos: l[2], fingertip_rot: l[3], pinch: l[4] };
        }
        if let Some(v) = t.eps1 {
            base.eps1 = v;
        }
        if let Some(v) = t.eps2 {
            base.eps2 = v;
        }
        if let Some(v) = t.sigmoid_slope {
            base.sigmoid_slope = v;
        }
        base.validate(hand.actuated_count())?;

        let mut protocol = match t.protocol.unwrap_or(default_protocol) {
            ProtocolKind::Offline => Protocol::offline(),
            ProtocolKind::Online => Protocol::online(),
        };
        let s = &mut protocol.settings;
        if let Some(v) = t.ema_alpha {
            if !(v > 0.0 && v <= 1.0) {
                bail!("ema_alpha must be in (0, 1], got {v}");
            }
            s.ema_alpha = v;
        }
        if let Some(v) = t.grad_tol {
            s.grad_tol = v;
        }
        if let Some(v) = t.step_tol {
            s.step_tol = v;
        }
        if let Some(v) = t.max_iter {
            s.max_iter = v;
        }
        if let Some(v) = t.settle_start {
            protocol.settle_start = v;
        }
        Ok(Resolved { hand, base, protocol })
    }
}
