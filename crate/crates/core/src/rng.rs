//! Seed derivation so that per-frame randomness does not depend on the
//! order in which frames are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ stream) ^ index)
}

pub fn frame_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const TARGET_LABEL: u64 = 1;
    pub const RANSAC: u64 = 2;
    pub const WEIGHTS: u64 = 3;
    pub const PATTERN: u64 = 4;
    pub const DEPTH_TARGET_LABEL: u64 = 5;
}
