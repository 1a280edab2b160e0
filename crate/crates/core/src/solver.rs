//! Per-frame box-constrained minimization, EMA smoothing, trajectory
//! sequencing and command-rate interpolation.
//!
//! The minimizer is a projected Levenberg-Marquardt method on the stacked
//! residuals of the objective: each trial solves the damped Gauss-Newton
//! system on the free variables (joints not held at a bound by the gradient),
//! projects onto the joint box and is accepted only if it lowers the
//! objective. The returned point therefore never scores worse than the start.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ablation::ARM_JOINTS;
use crate::error::{Error, Result};
use crate::model::KinematicChain;
use crate::objective::{FrameObjective, HumanHandFrame, ObjectiveConfig, Residuals};

/// Joint vector with its timestamp (seconds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub timestamp: f64,
}

impl JointState {
    pub fn new(q: Vec<f64>, timestamp: f64) -> Self {
        Self { q, timestamp }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Infinity norm of the projected gradient.
    pub grad_tol: f64,
    /// Infinity norm of a trial step.
    pub step_tol: f64,
    /// Trial evaluations per frame.
    pub max_iter: usize,
    pub ema_alpha: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { grad_tol: 1e-6, step_tol: 1e-8, max_iter: 100, ema_alpha: 0.3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GradTol,
    StepTol,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective_value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    /// Wall-clock seconds.
    pub solve_time: f64,
    pub converged: bool,
    pub termination_reason: TerminationReason,
}

/// A residual model `x -> r(x)` with `f(x) = |r(x)|^2`.
pub trait LeastSquares {
    fn residuals(&self, x: &[f64], with_jacobian: bool) -> Result<Residuals>;
}

impl LeastSquares for FrameObjective<'_> {
    fn residuals(&self, x: &[f64], with_jacobian: bool) -> Result<Residuals> {
        FrameObjective::residuals(self, x, with_jacobian)
    }
}

#[derive(Clone, Debug)]
pub struct BoxMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub reason: TerminationReason,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Minimize `|r(x)|^2` subject to `lo <= x <= hi`, starting at `x0`
/// (projected into the box first).
pub fn minimize_box(
    problem: &impl LeastSquares,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &SolverSettings,
) -> Result<BoxMinimum> {
    let n = x0.len();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lo.len().min(hi.len()) });
    }
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);

    let mut res = problem.residuals(&x, true)?;
    let mut f = res.value();
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let initial_value = f;
    let (mut g, mut h) = normal_equations(&res);
    let mut mu = 1e-3 * h.diagonal().max().max(1e-12);
    let mut iterations = 0;

    let reason = loop {
        let pg = (0..n).map(|j| (x[j] - (x[j] - g[j]).clamp(lo[j], hi[j])).abs()).fold(0.0, f64::max);
        if pg <= settings.grad_tol {
            break TerminationReason::GradTol;
        }
        if iterations >= settings.max_iter {
            break TerminationReason::MaxIter;
        }
        iterations += 1;

        let free: Vec<usize> = (0..n)
            .filter(|&j| !((x[j] <= lo[j] && g[j] > 0.0) || (x[j] >= hi[j] && g[j] < 0.0)))
            .collect();
        let mut trial = x.clone();
        if let Some(step) = damped_step(&h, &g, &free, mu) {
            for (k, &j) in free.iter().enumerate() {
                trial[j] += step[k];
            }
            project(&mut trial, lo, hi);
        }
        let step_norm = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        let candidate = problem.residuals(&trial, true)?;
        let f_trial = candidate.value();
        let improved = f_trial.is_finite() && f_trial < f;
        if improved {
            x = trial;
            f = f_trial;
            res = candidate;
            (g, h) = normal_equations(&res);
            mu = (mu / 3.0).max(1e-15);
        } else {
            mu *= 4.0;
        }
        if step_norm < settings.step_tol {
            break TerminationReason::StepTol;
        }
    };

    Ok(BoxMinimum { x, value: f, initial_value, iterations, reason })
}

/// Gradient `2 J^T r` and Gauss-Newton Hessian `2 J^T J`.
fn normal_equations(res: &Residuals) -> (DVector<f64>, DMatrix<f64>) {
    let g = res.gradient();
    let n = g.len();
    if res.is_empty() {
        return (g, DMatrix::zeros(n, n));
    }
    let j = res.jacobian();
    let h = j.tr_mul(&j) * 2.0;
    (g, h)
}

/// Solve `(H_FF + mu I) p = -g_F` on the free set.
fn damped_step(h: &DMatrix<f64>, g: &DVector<f64>, free: &[usize], mu: f64) -> Option<DVector<f64>> {
    if free.is_empty() {
        return None;
    }
    let k = free.len();
    let mut a = DMatrix::from_fn(k, k, |r, c| h[(free[r], free[c])]);
    for d in 0..k {
        a[(d, d)] += mu;
    }
    let rhs = DVector::from_fn(k, |r, _| -g[free[r]]);
    a.cholesky().map(|c| c.solve(&rhs))
}

/// Default start: the regularization target with arm joints at mid-range.
pub fn default_start(chain: &KinematicChain, cfg: &ObjectiveConfig) -> JointState {
    let mut q = if cfg.q_bar.len() == chain.actuated_count() {
        cfg.q_bar.clone()
    } else {
        vec![0.0; chain.actuated_count()]
    };
    let mid = chain.mid_range();
    let arm = ARM_JOINTS.min(q.len());
    q[..arm].copy_from_slice(&mid[..arm]);
    chain.clamp(&mut q);
    JointState::new(q, 0.0)
}

/// Trial budget for [`settle`].
pub const SETTLE_MAX_ITER: usize = 1000;

/// Rest state for holding `human` still: a stationary point of the objective
/// without the velocity term, reached from `q_start`. Repeating `human` through
/// [`retarget_trajectory`] from this state leaves it unchanged.
pub fn settle(
    chain: &KinematicChain,
    human: &HumanHandFrame,
    q_start: &JointState,
    cfg: &ObjectiveConfig,
    settings: &SolverSettings,
) -> Result<JointState> {
    let still = ObjectiveConfig { vel_reg: false, ..cfg.clone() };
    let settings = SolverSettings { max_iter: settings.max_iter.max(SETTLE_MAX_ITER), ..*settings };
    let (q, _) = solve_frame(chain, human, q_start, &still, &settings)?;
    Ok(JointState::new(q.q, human.timestamp))
}

/// One frame: minimize the objective from `q_warm`, which also serves as
/// the previous state of the velocity term.
pub fn solve_frame(
    chain: &KinematicChain,
    human: &HumanHandFrame,
    q_warm: &JointState,
    cfg: &ObjectiveConfig,
    settings: &SolverSettings,
) -> Result<(JointState, SolveReport)> {
    let start = Instant::now();
    let mut warm = q_warm.q.clone();
    if warm.len() != chain.actuated_count() {
        return Err(Error::DimensionMismatch { expected: chain.actuated_count(), got: warm.len() });
    }
    chain.clamp(&mut warm);
    let objective = FrameObjective::new(chain, human, &warm, cfg)?;
    let (lo, hi) = chain.bounds();
    let min = minimize_box(&objective, &warm, &lo, &hi, settings)?;
    let report = SolveReport {
        objective_value: min.value,
        initial_value: min.initial_value,
        iterations: min.iterations,
        solve_time: start.elapsed().as_secs_f64(),
        converged: min.reason != TerminationReason::MaxIter,
        termination_reason: min.reason,
    };
    Ok((JointState::new(min.x, human.timestamp), report))
}

/// `alpha * q_raw + (1 - alpha) * q_prev`, keeping `q_raw`'s timestamp.
pub fn ema_smooth(q_raw: &JointState, q_prev: &JointState, alpha: f64) -> Result<JointState> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("EMA alpha must lie in (0, 1], got {alpha}")));
    }
    if q_raw.len() != q_prev.len() {
        return Err(Error::DimensionMismatch { expected: q_prev.len(), got: q_raw.len() });
    }
    let q = q_raw.q.iter().zip(&q_prev.q).map(|(r, p)| alpha * r + (1.0 - alpha) * p).collect();
    Ok(JointState::new(q, q_raw.timestamp))
}

/// Sequential retargeting state: the smoothed output of each step is the
/// next warm start and the next velocity reference.
pub struct Retargeter<'a> {
    chain: &'a KinematicChain,
    cfg: &'a ObjectiveConfig,
    settings: SolverSettings,
    previous: JointState,
}

impl<'a> Retargeter<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        cfg: &'a ObjectiveConfig,
        settings: SolverSettings,
        q0: JointState,
    ) -> Result<Self> {
        cfg.validate(chain.actuated_count())?;
        if q0.len() != chain.actuated_count() {
            return Err(Error::DimensionMismatch { expected: chain.actuated_count(), got: q0.len() });
        }
        Ok(Self { chain, cfg, settings, previous: q0 })
    }

    pub fn previous(&self) -> &JointState {
        &self.previous
    }

    pub fn step(&mut self, human: &HumanHandFrame) -> Result<(JointState, SolveReport)> {
        let (raw, report) = solve_frame(self.chain, human, &self.previous, self.cfg, &self.settings)?;
        let mut prev = self.previous.clone();
        self.chain.clamp(&mut prev.q);
        let smoothed = ema_smooth(&raw, &prev, self.settings.ema_alpha)?;
        self.previous = smoothed.clone();
        Ok((smoothed, report))
    }
}

/// Warm-started, EMA-smoothed solves over a whole trajectory.
pub fn retarget_trajectory(
    chain: &KinematicChain,
    frames: &[HumanHandFrame],
    cfg: &ObjectiveConfig,
    q0: &JointState,
    settings: &SolverSettings,
) -> Result<(Vec<JointState>, Vec<SolveReport>)> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    check_increasing(frames.iter().map(|f| f.timestamp))?;
    let mut retargeter = Retargeter::new(chain, cfg, *settings, q0.clone())?;
    let mut states = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    for frame in frames {
        let (q, report) = retargeter.step(frame)?;
        states.push(q);
        reports.push(report);
    }
    Ok((states, reports))
}

pub(crate) fn check_increasing(ts: impl Iterator<Item = f64>) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    for (i, t) in ts.enumerate() {
        if t.is_nan() || t <= last {
            return Err(Error::Schema {
                index: i,
                message: format!("timestamp {t} does not increase (previous {last})"),
            });
        }
        last = t;
    }
    Ok(())
}

/// Timestamp slack when matching grid points to sample times.
const TIME_EPS: f64 = 1e-9;

/// Piecewise-linear resampling at `target_rate` Hz between the first and last
/// timestamps. Both endpoints are reproduced exactly.
pub fn interpolate_commands(states: &[JointState], target_rate: f64) -> Result<Vec<JointState>> {
    let (first, last) = match (states.first(), states.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::NoFrames),
    };
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::InvalidInput(format!("target rate must be positive, got {target_rate}")));
    }
    check_increasing(states.iter().map(|s| s.timestamp))?;
    let dim = first.len();
    if let Some(bad) = states.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }

    let t0 = first.timestamp;
    let span = last.timestamp - t0;
    let steps = (span * target_rate + TIME_EPS).floor() as usize;
    let mut out = Vec::with_capacity(steps + 2);
    out.push(first.clone());
    let mut seg = 0;
    for k in 1..=steps {
        let t = t0 + k as f64 / target_rate;
        if t >= last.timestamp - TIME_EPS {
            break;
        }
        while states[seg + 1].timestamp < t {
            seg += 1;
        }
        out.push(lerp(&states[seg], &states[seg + 1], t));
    }
    if states.len() > 1 {
        out.push(last.clone());
    }
    Ok(out)
}

/// Linear interpolation between `a` and `b` at time `t`.
pub fn lerp(a: &JointState, b: &JointState, t: f64) -> JointState {
    let u = (t - a.timestamp) / (b.timestamp - a.timestamp);
    let q = a.q.iter().zip(&b.q).map(|(x, y)| x + (y - x) * u).collect();
    JointState::new(q, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `sum_j w_j (x_j - c_j)^2`
    struct Diagonal {
        w: Vec<f64>,
        c: Vec<f64>,
    }

    impl LeastSquares for Diagonal {
        fn residuals(&self, x: &[f64], with_jacobian: bool) -> Result<Residuals> {
            let mut res = Residuals::new(x.len(), with_jacobian);
            for (j, (w, c)) in self.w.iter().zip(&self.c).enumerate() {
                res.push_joint(*w, x[j] - c, j);
            }
            Ok(res)
        }
    }

    #[test]
    fn diagonal_quadratic_reaches_center_or_bound() {
        let p = Diagonal { w: vec![1.0, 0.5, 2.0], c: vec![0.3, -2.0, 0.1] };
        let lo = [-1.0, -1.0, -1.0];
        let hi = [1.0, 1.0, 1.0];
        let out = minimize_box(&p, &[0.9, 0.9, -0.9], &lo, &hi, &SolverSettings::default()).unwrap();
        assert!((out.x[0] - 0.3).abs() < 1e-6);
        assert_eq!(out.x[1], -1.0);
        assert!((out.x[2] - 0.1).abs() < 1e-6);
        assert!(out.reason != TerminationReason::MaxIter);
    }

    #[test]
    fn ema_cases() {
        let prev = JointState::new(vec![0.0, 2.0], 0.0);
        let raw = JointState::new(vec![1.0, 4.0], 0.05);
        assert_eq!(ema_smooth(&raw, &prev, 1.0).unwrap(), raw);
        let s = ema_smooth(&raw, &prev, 0.3).unwrap();
        assert!((s.q[0] - 0.3).abs() < 1e-15);
        assert!((s.q[1] - 2.6).abs() < 1e-15);
        assert!(ema_smooth(&raw, &prev, 0.0).is_err());
        assert!(ema_smooth(&raw, &JointState::new(vec![0.0], 0.0), 0.3).is_err());
    }

    #[test]
    fn interpolation_counts_and_midpoints() {
        let a = JointState::new(vec![0.0, 1.0], 0.0);
        let b = JointState::new(vec![1.0, 1.0], 0.05);
        let out = interpolate_commands(&[a.clone(), b.clone()], 100.0).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], a);
        assert_eq!(*out.last().unwrap(), b);
        // midpoint of the 5 intervals sits between samples 2 and 3
        let mid = lerp(&out[2], &out[3], 0.025);
        assert!((mid.q[0] - 0.5).abs() < 1e-12);
        assert!(out.iter().all(|s| s.q[1] == 1.0));

        let states: Vec<_> = (0..21).map(|k| JointState::new(vec![k as f64], k as f64 / 20.0)).collect();
        let out = interpolate_commands(&states, 100.0).unwrap();
        assert_eq!(out.len(), 101);
        for w in out.windows(2) {
            assert!((w[1].timestamp - w[0].timestamp - 0.01).abs() < 1e-9);
        }
        assert!(interpolate_commands(&[], 100.0).is_err());
    }
}
