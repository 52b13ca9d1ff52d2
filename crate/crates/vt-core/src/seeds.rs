//! Deterministic seed derivation for hierarchical randomness.
//!
//! Every randomized component owns a `ChaCha8Rng` seeded by
//! `derive(parent_seed, tag)`. Derivation is injective in `tag` for a fixed
//! parent, so sibling components never share a stream and results do not
//! depend on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; a bijection on u64.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a structural tag.
///
/// `tag -> GOLDEN*tag` is a bijection (odd multiplier), adding the parent seed
/// is a bijection, and `mix` is a bijection, so the map is injective in `tag`.
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix(seed.wrapping_add(GOLDEN.wrapping_mul(tag)))
}

/// RNG stream for a derived seed.
pub fn rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag))
}
