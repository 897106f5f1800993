//! Deterministic seed derivation for parallel tasks.
//!
//! Every stochastic task (one simulated sequence, one solve, one replicate)
//! owns an RNG seeded from its master seed and a stable task key, so results
//! do not depend on thread scheduling or reduction order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a task index.
pub fn derive(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a child seed from a parent seed and a sequence of keys.
pub fn derive_all(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(seed, |acc, &k| derive(acc, k))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
