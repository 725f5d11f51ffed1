//! Seed plumbing. Every stochastic step takes an explicit `u64` seed and
//! derives independent streams from it, so results never depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for a named stream.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const MI: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const ZOO: u64 = 4;
    pub const LAYER: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const NET: u64 = 7;
}
