//! Seed derivation.
//!
//! Every random decision in the crate flows from a single master seed,
//! split per purpose so that changing e.g. the number of support draws in
//! evaluation cannot perturb batch sampling during training.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::Fnv64;

/// Derive a child seed from a master seed and a purpose label.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut h = Fnv64::new();
    h.update(&master.to_le_bytes());
    h.update(purpose.as_bytes());
    h.finish()
}

/// Derive a child seed with an additional index (phase number, draw number).
pub fn derive_seed_indexed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut h = Fnv64::new();
    h.update(&master.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(&index.to_le_bytes());
    h.finish()
}

/// The crate's reference RNG: deterministic and portable across platforms.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
