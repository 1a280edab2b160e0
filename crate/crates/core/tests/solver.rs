mod common;

use common::{leap, nearby_q, rng, uniform_q, varied_frames};
use dexretarget::objective::{FrameObjective, Lambdas};
use dexretarget::solver::{default_start, ema_smooth, interpolate_commands, retarget_trajectory, settle, solve_frame};
use dexretarget::{base_config, gen_synthetic, preset, HandMorphParams, HandProfile, JointState, ObjectiveConfig, PresetId, SolverSettings, SyntheticKind};
use proptest::prelude::*;
use rand::Rng;

/// Only the joint-position term, with every joint regularized.
fn joint_only(m: usize, q_bar: Vec<f64>) -> ObjectiveConfig {
    let mut cfg = base_config(HandProfile::Leap);
    cfg.lambda = Lambdas { thumb_pos: 0.0, wrist_rot: 0.0, fingertip_pos: 0.0, fingertip_rot: 0.0, pinch: 0.0 };
    cfg.pinch_term = false;
    cfg.fingertip_rot_term = false;
    cfg.vel_reg = false;
    cfg.w_pos = vec![1.0; m];
    cfg.q_bar = q_bar;
    cfg
}

#[test]
fn joint_term_alone_returns_the_clamped_reference() {
    let chain = leap();
    let (lo, hi) = chain.bounds();
    let frame = &varied_frames(4, 1, 0)[0];
    let mut r = rng(11);
    for _ in 0..20 {
        // Half the coordinates fall outside their limits.
        let q_bar: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| r.random_range(l - 0.5 * (h - l)..h + 0.5 * (h - l))).collect();
        let cfg = joint_only(chain.actuated_count(), q_bar.clone());
        let start = JointState::new(uniform_q(&chain, &mut r), 0.0);
        let (q, _) = solve_frame(&chain, frame, &start, &cfg, &SolverSettings::default()).unwrap();
        for j in 0..q.len() {
            assert!((q.q[j] - q_bar[j].clamp(lo[j], hi[j])).abs() < 1e-6, "joint {j}");
        }
    }
}

#[test]
fn warm_starts_need_fewer_iterations_than_cold_starts() {
    let chain = leap();
    let cfg = base_config(HandProfile::Leap);
    let morph = HandMorphParams::four_finger().with_mismatch(0.3);
    let frames = gen_synthetic(SyntheticKind::Pinch { finger: 2 }, 3.0, 20.0, &morph, 0).unwrap();
    let settings = SolverSettings { ema_alpha: 1.0, ..SolverSettings::default() };
    let q0 = settle(&chain, &frames[0], &default_start(&chain, &cfg), &cfg, &settings).unwrap();
    let (states, warm) = retarget_trajectory(&chain, &frames, &cfg, &q0, &settings).unwrap();
    let warm_iters: usize = warm.iter().map(|r| r.iterations).sum();
    let cold_iters: usize = frames
        .iter()
        .zip(std::iter::once(&q0).chain(&states))
        .map(|(f, prev)| {
            // Same velocity reference, solve started from the default start.
            let obj_cfg = cfg.clone();
            let objective = FrameObjective::new(&chain, f, &prev.q, &obj_cfg).unwrap();
            let (lo, hi) = chain.bounds();
            dexretarget::solver::minimize_box(&objective, &default_start(&chain, &cfg).q, &lo, &hi, &settings)
                .unwrap()
                .iterations
        })
        .sum();
    assert!(2 * warm_iters < cold_iters, "warm {warm_iters} cold {cold_iters}");
}

#[test]
fn a_converged_state_is_a_fixed_point() {
    let chain = leap();
    let cfg = base_config(HandProfile::Leap);
    let frame = &varied_frames(4, 1, 3)[0];
    let settings = SolverSettings::default();
    let q = settle(&chain, frame, &default_start(&chain, &cfg), &cfg, &settings).unwrap();
    let (again, report) = solve_frame(&chain, frame, &q, &cfg, &settings).unwrap();
    assert!(report.iterations <= 2, "{report:?}");
    for (a, b) in again.q.iter().zip(&q.q) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn uniform_weight_scaling_keeps_the_minimizer() {
    let chain = leap();
    let base = preset(PresetId::Full, &base_config(HandProfile::Leap));
    let frame = &varied_frames(4, 1, 4)[0];
    let mut scaled = base.clone();
    let k = 10.0;
    scaled.lambda = base.lambda.scaled(k);
    scaled.w_pos = base.w_pos.iter().map(|w| w * k).collect();
    scaled.w_vel = base.w_vel.iter().map(|w| w * k).collect();
    let settings = SolverSettings { grad_tol: 1e-10, step_tol: 1e-14, max_iter: 2000, ..SolverSettings::default() };
    let start = default_start(&chain, &base);
    let (a, ra) = solve_frame(&chain, frame, &start, &base, &settings).unwrap();
    let (b, rb) = solve_frame(&chain, frame, &start, &scaled, &settings).unwrap();
    assert!((rb.objective_value - k * ra.objective_value).abs() <= 1e-6 * rb.objective_value.max(1e-12));
    for (x, y) in a.q.iter().zip(&b.q) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn commands_interpolate_between_smoothed_states() {
    let states: Vec<JointState> = (0..3).map(|k| JointState::new(vec![k as f64], k as f64 * 0.05)).collect();
    let cmds = interpolate_commands(&states, 100.0).unwrap();
    assert_eq!(cmds.len(), 11);
    for w in cmds.windows(2) {
        assert!((w[1].timestamp - w[0].timestamp - 0.01).abs() < 1e-9);
        assert!((w[1].q[0] - w[0].q[0] - 0.2).abs() < 1e-9);
    }
    let smoothed = ema_smooth(&JointState::new(vec![1.0], 1.0), &JointState::new(vec![0.0], 0.0), 0.3).unwrap();
    assert!((smoothed.q[0] - 0.3).abs() < 1e-15);
    assert_eq!(smoothed.timestamp, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solutions_stay_in_the_box_and_never_worsen(seed in 0u64..1_000_000, pid in 0usize..11) {
        let chain = leap();
        let cfg = preset(PresetId::ALL[pid], &base_config(HandProfile::Leap));
        let frame = &varied_frames(4, 1, seed)[0];
        let mut r = rng(seed);
        let warm = JointState::new(uniform_q(&chain, &mut r), 0.0);
        let (q, report) = solve_frame(&chain, frame, &warm, &cfg, &SolverSettings::default()).unwrap();
        let (lo, hi) = chain.bounds();
        for j in 0..q.len() {
            prop_assert!(q.q[j] >= lo[j] && q.q[j] <= hi[j]);
        }
        prop_assert!(report.objective_value <= report.initial_value);
        let obj = FrameObjective::new(&chain, frame, &warm.q, &cfg).unwrap();
        prop_assert!((obj.value(&q.q).unwrap() - report.objective_value).abs() <= 1e-12 * report.objective_value.max(1.0));
    }

    #[test]
    fn solving_is_deterministic(seed in 0u64..1_000_000) {
        let chain = leap();
        let cfg = base_config(HandProfile::Leap);
        let frame = &varied_frames(4, 1, seed)[0];
        let mut r = rng(seed);
        let q = uniform_q(&chain, &mut r);
        let warm = JointState::new(nearby_q(&chain, &q, 0.1, &mut r), 0.0);
        let (a, _) = solve_frame(&chain, frame, &warm, &cfg, &SolverSettings::default()).unwrap();
        let (b, _) = solve_frame(&chain, frame, &warm, &cfg, &SolverSettings::default()).unwrap();
        prop_assert_eq!(a.q, b.q);
    }
}
