//! Seed-stream derivation.
//!
//! Every random stream in the engine is a ChaCha8 generator seeded from a
//! 64-bit value obtained by mixing a parent seed with a stream index through
//! SplitMix64. The mixing is fixed so results reproduce across machines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Human-readable description of [`mix`], written into result headers.
pub const MIXING_FUNCTION: &str =
    "splitmix64(splitmix64(parent) ^ (index * 0x9E3779B97F4A7C15))";

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the child seed for stream `index` of `parent`.
pub fn mix(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams so independent consumers never share draws.
pub mod stream {
    pub const ENSEMBLE: u64 = 1;
    pub const TRUTH: u64 = 2;
    pub const OBSERVATION: u64 = 3;
    pub const ENKF: u64 = 4;
}
