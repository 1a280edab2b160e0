//! Python bindings: chains, trajectories, retargeting and evaluation.

use std::path::PathBuf;
use std::str::FromStr;

use dexretarget::ablation::{run_preset, start_state, Protocol};
use dexretarget::io::{builtin_chain, load_trajectory_file, save_trajectory};
use dexretarget::metrics::{all_fingers, closest_pinch_finger, pinch_pair};
use dexretarget::solver::{retarget_trajectory, JointState};
use dexretarget::{
    base_config, evaluate, forward_kinematics, gen_synthetic, preset, HandMorphParams, HandProfile, HumanHandFrame,
    KinematicChain, PresetId, SyntheticKind,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A robot kinematic chain with role-tagged frames.
#[pyclass(frozen)]
struct Chain {
    inner: KinematicChain,
    profile: HandProfile,
}

fn profile_for(chain: &KinematicChain) -> PyResult<HandProfile> {
    HandProfile::from_actuated_count(chain.actuated_count())
        .ok_or_else(|| err(format!("no hand profile for a {}-DoF chain", chain.actuated_count())))
}

#[pymethods]
impl Chain {
    /// Load a URDF (with optional role map) or a native chain JSON file.
    #[staticmethod]
    #[pyo3(signature = (path, roles=None))]
    fn load(path: PathBuf, roles: Option<PathBuf>) -> PyResult<Self> {
        let inner = dexretarget::load_chain(&path, roles.as_deref()).map_err(err)?;
        let profile = profile_for(&inner)?;
        Ok(Self { inner, profile })
    }

    /// One of the bundled arm-hand chains: `leap` or `shadow`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let profile = HandProfile::from_str(name).map_err(err)?;
        Ok(Self { inner: builtin_chain(profile).map_err(err)?, profile })
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.actuated_count()
    }

    #[getter]
    fn finger_count(&self) -> usize {
        self.inner.finger_count()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.inner.actuated_names().into_iter().map(str::to_owned).collect()
    }

    /// `(lower, upper)` joint limits.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.bounds()
    }

    /// Role name to `(position xyz, orientation wxyz)`.
    fn forward_kinematics<'py>(&self, py: Python<'py>, q: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let poses = forward_kinematics(&self.inner, &q).map_err(err)?;
        let out = PyDict::new(py);
        for (role, pose) in poses {
            let p = pose.position;
            let o = pose.orientation;
            out.set_item(role.to_string(), ([p.x, p.y, p.z], [o.w, o.i, o.j, o.k]))?;
        }
        Ok(out)
    }
}

/// A timestamped human hand keypoint trajectory.
#[pyclass(frozen)]
struct Trajectory {
    frames: Vec<HumanHandFrame>,
    rate: f64,
}

#[pymethods]
impl Trajectory {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let t = load_trajectory_file(&path).map_err(err)?;
        Ok(Self { frames: t.frames, rate: t.header.rate_hz })
    }

    /// Synthetic trajectory, e.g. `pinch:index`, `crossing`, `jitter:0.003`, `constant`.
    #[staticmethod]
    #[pyo3(signature = (kind, duration, rate=20.0, seed=0, mismatch=0.0, fingers=4))]
    fn synthetic(kind: &str, duration: f64, rate: f64, seed: u64, mismatch: f64, fingers: usize) -> PyResult<Self> {
        let kind = SyntheticKind::from_str(kind).map_err(err)?;
        let morph = match fingers {
            4 => HandMorphParams::four_finger(),
            5 => HandMorphParams::five_finger(),
            n => return Err(err(format!("unsupported finger count {n}"))),
        };
        let frames = gen_synthetic(kind, duration, rate, &morph.with_mismatch(mismatch), seed).map_err(err)?;
        Ok(Self { frames, rate })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_trajectory(&path, &self.frames, self.rate).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.frames.len()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.rate
    }

    #[getter]
    fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }
}

fn protocol(name: &str) -> PyResult<Protocol> {
    match name {
        "online" => Ok(Protocol::online()),
        "offline" => Ok(Protocol::offline()),
        other => Err(err(format!("unknown protocol `{other}`"))),
    }
}

/// Retarget a trajectory; returns one joint vector per frame.
#[pyfunction]
#[pyo3(signature = (chain, trajectory, preset_name="full", protocol_name="online"))]
fn retarget(
    py: Python<'_>,
    chain: &Chain,
    trajectory: &Trajectory,
    preset_name: &str,
    protocol_name: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = preset(PresetId::from_str(preset_name).map_err(err)?, &base_config(chain.profile));
    let protocol = protocol(protocol_name)?;
    py.detach(|| {
        let q0 = start_state(&chain.inner, &trajectory.frames, &cfg, &protocol)?;
        retarget_trajectory(&chain.inner, &trajectory.frames, &cfg, &q0, &protocol.settings)
    })
    .map(|(states, _)| states.into_iter().map(|s| s.q).collect())
    .map_err(err)
}

/// Metrics of joint vectors against a trajectory, as a dict.
#[pyfunction]
#[pyo3(signature = (chain, trajectory, states, pinch_finger=None))]
fn evaluate_states<'py>(
    py: Python<'py>,
    chain: &Chain,
    trajectory: &Trajectory,
    states: Vec<Vec<f64>>,
    pinch_finger: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let states: Vec<JointState> =
        states.into_iter().zip(&trajectory.frames).map(|(q, f)| JointState::new(q, f.timestamp)).collect();
    let selection = match pinch_finger {
        Some(i) => pinch_pair(i),
        None => all_fingers(chain.inner.finger_count()),
    };
    let report =
        evaluate(&chain.inner, &trajectory.frames, &states, &base_config(chain.profile), &selection).map_err(err)?;
    to_python(py, &report)
}

/// Run one ablation preset under a protocol and return its metrics.
/// Metrics cover the thumb and the finger that pinches most closely.
#[pyfunction]
#[pyo3(signature = (chain, trajectory, preset_name, protocol_name="offline"))]
fn ablate<'py>(
    py: Python<'py>,
    chain: &Chain,
    trajectory: &Trajectory,
    preset_name: &str,
    protocol_name: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let id = PresetId::from_str(preset_name).map_err(err)?;
    let protocol = protocol(protocol_name)?;
    let selection = closest_pinch_finger(&trajectory.frames)
        .map(pinch_pair)
        .unwrap_or_else(|| all_fingers(chain.inner.finger_count()));
    let run = py
        .detach(|| {
            run_preset(&chain.inner, &trajectory.frames, &base_config(chain.profile), id, &protocol, &selection)
        })
        .map_err(err)?;
    to_python(py, &run.metrics)
}

/// Names of the ablation presets.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PresetId::ALL.iter().map(|p| p.name()).collect()
}

#[pymodule]
#[pyo3(name = "dexretarget")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chain>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(retarget, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_states, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
