//! Seed derivation and the random generators shared by every module.
//!
//! All randomness flows from ChaCha8 streams seeded through [`derive_seed`],
//! a SplitMix64 finalizer applied to `(parent, tag, index)`. Gaussian draws
//! use the ziggurat sampler of `rand_distr::StandardNormal`. Both algorithms
//! are fixed by the pinned crate versions, so trajectories are identical on
//! every platform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Stream tags for [`derive_seed`].
pub mod tag {
    pub const RUN: u64 = 0x52554e;
    pub const SOURCE: u64 = 0x535243;
    pub const NOISE: u64 = 0x4e4f49;
    pub const MAP: u64 = 0x4d4150;
    pub const WALK: u64 = 0x57414c;
    pub const WALK_INIT: u64 = 0x57494e;
    pub const TEST: u64 = 0x545354;
    pub const MOMENTS: u64 = 0x4d4f4d;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(parent) ^ tag) ^ index)
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circular complex Gaussian with `E|w|^2 = variance`.
pub fn circular_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * standard_normal(rng), s * standard_normal(rng))
}
