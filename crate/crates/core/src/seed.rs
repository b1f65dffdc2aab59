//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is keyed off a single master seed by
//! hashing a path of integer labels, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a path of labels into a child seed.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &k| {
        splitmix64(acc ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// A ChaCha8 stream for `(seed, stream)`; `stream` selects one of 2^64
/// independent sequences under the same key.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream labels used across the crate.
pub mod label {
    pub const RESERVOIR: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SOURCE: u64 = 3;
    pub const DATASET: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const REPEAT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}
