//! `dexretarget`: generate hand trajectories, retarget them onto a robot arm
//! and hand, evaluate, compare objective variants, profile and stream.

mod commands;
mod options;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use options::{ChainArgs, Tunables};

#[derive(Parser, Debug)]
#[command(name = "dexretarget", version, about = "Human-to-robot hand motion retargeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic human hand trajectory.
    Gen(GenArgs),
    /// Retarget a trajectory and save the joint states.
    Retarget(RetargetArgs),
    /// Compute error metrics of saved joint states against a trajectory.
    Evaluate(EvaluateArgs),
    /// Run several objective presets on one trajectory and tabulate errors.
    Ablate(AblateArgs),
    /// Measure per-frame solve time.
    Profile(ProfileArgs),
    /// Retarget a live length-prefixed JSON frame stream.
    Stream(StreamArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// pinch:<index|middle|ring|little|1..>, crossing, jitter:<sigma m>, constant.
    #[arg(long)]
    pub kind: String,
    /// Seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Hz.
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Fingers including the thumb (4 or 5).
    #[arg(long, default_value_t = 4)]
    pub fingers: usize,
    /// Alternating per-finger length scaling (0.3 = +-30%).
    #[arg(long, default_value_t = 0.0)]
    pub mismatch: f64,
    /// JSON hand morphology replacing the built-in skeleton.
    #[arg(long)]
    pub morphology: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output trajectory (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub trajectory: PathBuf,
    /// full, a1..a8, dexmv, dexpilot.
    #[arg(long, default_value = "full")]
    pub preset: String,
    #[command(flatten)]
    pub tunables: Tunables,
    /// Output joint states (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelectionArgs {
    /// Restrict global and thumb-relative errors to the thumb and the
    /// pinching finger.
    #[arg(long)]
    pub pinch_pair_only: bool,
    /// Pinching finger (1 = index) [default: the finger closest to the thumb].
    #[arg(long)]
    pub pinch_finger: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Human trajectory the states were computed from.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Joint states (JSONL).
    #[arg(long)]
    pub states: PathBuf,
    /// Preset whose hand scale applies to the human keypoints.
    #[arg(long, default_value = "full")]
    pub preset: String,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub tunables: Tunables,
    /// Metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Full metrics report (JSON), including joint profiles.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Comma-separated presets.
    #[arg(long, value_delimiter = ',', default_value = "full,a1,a2,a3,a4,a5,a6,a7,a8,dexmv,dexpilot")]
    pub presets: Vec<String>,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub tunables: Tunables,
    /// Also save each preset's joint states.
    #[arg(long)]
    pub save_states: bool,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, default_value = "full")]
    pub preset: String,
    /// Passes over the trajectory.
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Control rate defining the per-frame budget [default: trajectory rate].
    #[arg(long)]
    pub rate: Option<f64>,
    #[command(flatten)]
    pub tunables: Tunables,
    /// Also write the statistics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value = "full")]
    pub preset: String,
    /// Solve rate (Hz).
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Command output rate (Hz).
    #[arg(long, default_value_t = 100.0)]
    pub command_rate: f64,
    /// Tick on the wall clock instead of frame timestamps.
    #[arg(long)]
    pub paced: bool,
    /// Listen on this address and serve one connection instead of stdio.
    #[arg(long)]
    pub tcp: Option<String>,
    #[command(flatten)]
    pub tunables: Tunables,
    /// Write final statistics as JSON here instead of stderr.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Retarget(a) => commands::retarget(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Profile(a) => commands::profile(a),
        Command::Stream(a) => commands::stream(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
