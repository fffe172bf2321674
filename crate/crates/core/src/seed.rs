//! Seed derivation shared by every stochastic routine.
//!
//! Child seeds are derived from a master seed and an entity index with
//! [`split_seed`], so serial and parallel runs that process the same
//! entities draw identical random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for entity `index` under `master`.
///
/// `mix64(master + (index + 1) * GOLDEN_GAMMA)`, with wrapping arithmetic.
/// For a fixed master the map is injective in `index`, so sibling seeds are
/// pairwise distinct.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
