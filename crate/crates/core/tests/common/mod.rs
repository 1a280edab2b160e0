//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use dexretarget::io::{add_jitter, builtin_chain};
use dexretarget::{gen_synthetic, HandMorphParams, HandProfile, HumanHandFrame, KinematicChain, SyntheticKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn leap() -> KinematicChain {
    builtin_chain(HandProfile::Leap).unwrap()
}

pub fn shadow() -> KinematicChain {
    builtin_chain(HandProfile::Shadow).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_q(chain: &KinematicChain, rng: &mut impl Rng) -> Vec<f64> {
    let (lo, hi) = chain.bounds();
    lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect()
}

/// `q` moved by up to `step` per joint, kept inside the limits.
pub fn nearby_q(chain: &KinematicChain, q: &[f64], step: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out: Vec<f64> = q.iter().map(|x| x + rng.random_range(-step..=step)).collect();
    chain.clamp(&mut out);
    out
}

/// Varied hand frames: pinches of every primary finger with mismatched
/// morphology and tracking noise, covering open, closing and contact phases.
pub fn varied_frames(finger_count: usize, count: usize, seed: u64) -> Vec<HumanHandFrame> {
    let morph = if finger_count == 5 { HandMorphParams::five_finger() } else { HandMorphParams::four_finger() };
    let mut pool = Vec::new();
    for finger in 1..finger_count {
        let mut frames = gen_synthetic(SyntheticKind::Pinch { finger }, 5.0, 20.0, &morph.clone().with_mismatch(0.3), 0).unwrap();
        add_jitter(&mut frames, 0.003, seed + finger as u64).unwrap();
        pool.extend(frames);
    }
    let mut r = rng(seed);
    (0..count).map(|_| pool[r.random_range(0..pool.len())].clone()).collect()
}
