//! Kinematic retargeting of human hand keypoints onto an arm+hand robot.
//!
//! Each frame is solved as a box-constrained nonlinear least-squares problem
//! over all actuated joints. The objective combines a global anchor (thumb
//! tip or wrist position) with wrist orientation, wrist-to-fingertip shape
//! vectors, a switched thumb-to-finger pinch term, DIP-to-tip orientation
//! vectors and joint-space regularization. [`ablation`] provides the named
//! variants of that objective and [`metrics`] the kinematic error measures
//! used to compare them.

pub mod ablation;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod solver;
pub mod stream;

pub use ablation::{base_config, preset, run_preset, HandProfile, PresetId, PresetRun, Protocol};
pub use error::{Error, Result};
pub use model::{forward_kinematics, frame_jacobian, FrameRole, JointKind, JointSpec, KinematicChain, Pose};
pub use io::{gen_synthetic, load_chain, load_trajectory, parse_urdf_subset, save_report, save_states, HandMorphParams, SyntheticKind};
pub use metrics::{evaluate, joint_profile, MetricsReport};
pub use stream::{run_stream, StreamConfig, StreamRun, StreamStats};
pub use objective::{total_objective, HumanHandFrame, ObjectiveConfig};
pub use solver::{
    ema_smooth, interpolate_commands, retarget_trajectory, solve_frame, JointState, SolveReport,
    SolverSettings,
};
