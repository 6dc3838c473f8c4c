//! Deterministic seed fan-out.
//!
//! A single master seed is split into independent component streams by
//! hashing `SHA-256(master_le_bytes || tag)` into a ChaCha12 seed. The tag is
//! a short string naming the consumer ("alice", "tag", "eve", "verifier",
//! ...), optionally suffixed with a trial index, so runs are reproducible
//! while components never share a stream.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// ChaCha12 stream for `tag` under `master` seed.
pub fn component_rng(master: u64, tag: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Stream for trial `index` of component `tag`.
pub fn trial_rng(master: u64, tag: &str, index: u64) -> ChaCha12Rng {
    component_rng(master, &format!("{tag}/{index}"))
}
