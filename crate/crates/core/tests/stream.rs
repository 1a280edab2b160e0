use dexretarget::io::{builtin_chain, frame_record};
use dexretarget::solver::{default_start, retarget_trajectory, SolverSettings};
use dexretarget::stream::{decode_commands, encode_frames, run_stream, write_message, StreamConfig};
use dexretarget::{base_config, gen_synthetic, preset, HandMorphParams, HandProfile, PresetId, SyntheticKind};

fn setup() -> (dexretarget::KinematicChain, dexretarget::ObjectiveConfig) {
    let chain = builtin_chain(HandProfile::Leap).unwrap();
    let cfg = preset(PresetId::Full, &base_config(HandProfile::Leap));
    (chain, cfg)
}

fn pinch(rate: f64, duration: f64) -> Vec<dexretarget::HumanHandFrame> {
    let morph = HandMorphParams::four_finger().with_mismatch(0.3);
    gen_synthetic(SyntheticKind::Pinch { finger: 1 }, duration, rate, &morph, 7).unwrap()
}

#[test]
fn replay_matches_batch_frame_for_frame() {
    let (chain, cfg) = setup();
    let frames = pinch(20.0, 1.5);
    let q0 = default_start(&chain, &cfg);
    let settings = SolverSettings::default();
    let (batch, _) = retarget_trajectory(&chain, &frames, &cfg, &q0, &settings).unwrap();

    let input = encode_frames(&frames, 20.0).unwrap();
    let mut out = Vec::new();
    let run = run_stream(&input[..], &mut out, &chain, &cfg, &q0, &StreamConfig::default()).unwrap();

    assert_eq!(run.stats.frames_dropped, 0);
    assert_eq!(run.stats.frames_processed, frames.len());
    assert_eq!(run.targets.len(), batch.len());
    for (s, b) in run.targets.iter().zip(&batch) {
        assert_eq!(s.timestamp, b.timestamp);
        for (x, y) in s.q.iter().zip(&b.q) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    let cmds = decode_commands(&out).unwrap();
    assert_eq!(cmds.len(), run.stats.commands_emitted);
    // One command at the first tick, five per later tick.
    assert_eq!(cmds.len(), 1 + 5 * (frames.len() - 1));
    for w in cmds.windows(2) {
        assert!((w[1].t - w[0].t - 0.01).abs() < 1e-3);
    }
    // Every fifth command lands on a tick and equals that tick's target.
    for (k, target) in batch.iter().enumerate() {
        assert_eq!(cmds[5 * k].q, target.q);
    }
}

#[test]
fn fast_input_drops_frames_and_keeps_commands_monotone() {
    let (chain, cfg) = setup();
    let frames = pinch(100.0, 1.0);
    let q0 = default_start(&chain, &cfg);
    let input = encode_frames(&frames, 100.0).unwrap();
    let mut out = Vec::new();
    let run = run_stream(&input[..], &mut out, &chain, &cfg, &q0, &StreamConfig::default()).unwrap();
    let stats = &run.stats;
    assert!(stats.frames_dropped > 0);
    assert_eq!(stats.frames_processed + stats.frames_dropped, frames.len());
    assert!(stats.frames_over_budget <= stats.frames_processed);
    // The frame used at each tick is the newest one not later than the tick.
    for (k, t) in run.targets.iter().enumerate() {
        let tick = k as f64 * 0.05;
        let newest = frames.iter().rev().find(|f| f.timestamp <= tick + 1e-9).unwrap();
        assert_eq!(t.timestamp, newest.timestamp, "tick {k}");
    }
    let cmds = decode_commands(&out).unwrap();
    for w in cmds.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!((w[1].t - w[0].t - 0.01).abs() < 1e-3);
    }
}

#[test]
fn empty_input_yields_no_output() {
    let (chain, cfg) = setup();
    let q0 = default_start(&chain, &cfg);
    let mut out = Vec::new();
    let run = run_stream(&[][..], &mut out, &chain, &cfg, &q0, &StreamConfig::default()).unwrap();
    assert_eq!(run.stats.frames_processed, 0);
    assert_eq!(run.stats.commands_emitted, 0);
    assert!(out.is_empty());
}

#[test]
fn malformed_messages_are_skipped_and_counted() {
    let (chain, cfg) = setup();
    let frames = pinch(20.0, 0.5);
    let q0 = default_start(&chain, &cfg);
    let mut input = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if i == 3 {
            input.extend_from_slice(&4u32.to_be_bytes());
            input.extend_from_slice(b"{no}");
            write_message(&mut input, &serde_json::json!({"t": 9.0})).unwrap();
            // Out of order.
            write_message(&mut input, &frame_record(&frames[0])).unwrap();
        }
        write_message(&mut input, &frame_record(f)).unwrap();
    }
    // Truncated trailing message.
    input.extend_from_slice(&100u32.to_be_bytes());
    input.extend_from_slice(b"{\"t\"");
    let mut out = Vec::new();
    let run = run_stream(&input[..], &mut out, &chain, &cfg, &q0, &StreamConfig::default()).unwrap();
    assert_eq!(run.stats.frames_malformed, 4);
    assert_eq!(run.stats.frames_processed, frames.len());
}

#[test]
fn paced_mode_processes_a_short_stream() {
    let (chain, cfg) = setup();
    let frames = pinch(20.0, 0.3);
    let q0 = default_start(&chain, &cfg);
    let input = encode_frames(&frames, 20.0).unwrap();
    let mut out = Vec::new();
    let config = StreamConfig { paced: true, ..StreamConfig::default() };
    let run = run_stream(&input[..], &mut out, &chain, &cfg, &q0, &config).unwrap();
    // Input arrives faster than real time, so most frames are overwritten.
    assert!(run.stats.frames_processed >= 1);
    assert_eq!(run.stats.frames_processed + run.stats.frames_dropped, frames.len());
    assert!(run.stats.latency_estimate >= 0.0);
}
