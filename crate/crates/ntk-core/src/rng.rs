//! Deterministic randomness.
//!
//! All sampling in this crate goes through ChaCha8, a stream cipher with
//! platform-independent output, seeded through [`derive_seed`]: child seeds
//! are the first eight bytes of SHA-256 over `(parent_seed, tag, index)`.
//! Distinct tags give statistically independent streams, and an `(i, tag)`
//! pair always yields the same stream regardless of how many other streams
//! were drawn first — which is what makes per-sample, per-layer and per-trial
//! parallelism reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `(parent, tag, index)` by hashing.
///
/// The tag is length-prefixed so `("ab", 1)` and `("a", ...)` cannot collide
/// byte-wise.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A generator for the stream identified by `seed`.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `stream(derive_seed(parent, tag, index))`.
pub fn substream(parent: u64, tag: &str, index: u64) -> ChaCha8Rng {
    stream(derive_seed(parent, tag, index))
}
