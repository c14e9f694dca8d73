//! Seeded random streams.
//!
//! Every stochastic quantity in a run (channel draws, noise, time-hopping
//! offsets, minibatch selection) is drawn from its own stream, derived from
//! the run seed and a tuple of integer tags. Streams never depend on the
//! order in which work is scheduled, so concurrent evaluation reproduces the
//! sequential result exactly.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const TRAIN_CHANNEL: u64 = 3;
    pub const TRAIN_NOISE: u64 = 4;
    pub const EVAL_CHANNEL: u64 = 5;
    pub const EVAL_NOISE: u64 = 6;
    pub const DATA: u64 = 7;
    pub const BASELINE: u64 = 8;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a base seed and tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(seed), |h, &t| splitmix(h ^ splitmix(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = variance`.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = libm::sqrt(variance / 2.0);
    let re = normal(rng);
    let im = normal(rng);
    Complex64::new(s * re, s * im)
}
