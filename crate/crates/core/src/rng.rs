//! Seed derivation for ensembles.
//!
//! Every random object is generated from a ChaCha8 stream. Trial `i` of an
//! ensemble with base seed `s` uses the seed `s ^ i`, so any trial can be
//! regenerated on its own. Per-path and per-sample streams inside a single
//! estimator use ChaCha's 64-bit stream counter instead, which keeps them
//! independent of the base-seed arithmetic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for a plain seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of trial `index` within an ensemble.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
