#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volcal::model::{Bump, BumpPerturbation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One to three bumps inside (−b, b) with independent f₀/f₁ amplitudes of
/// size up to `amp`.
pub fn random_bumps(rng: &mut ChaCha8Rng, b: f64, amp: f64) -> BumpPerturbation {
    let count = rng.random_range(1..=3);
    let bumps = (0..count)
        .map(|_| {
            let width = b * rng.random_range(0.3..0.9);
            let center = rng.random_range(-(b - width)..=(b - width));
            Bump {
                center,
                width,
                amp0: amp * rng.random_range(-1.0..1.0),
                amp1: amp * rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    BumpPerturbation::new(b, bumps).unwrap()
}

pub fn rel_linf(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

pub fn rel_l2(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = want.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}
