//! Seeded random substreams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run
//! seed plus a label path (question id, group key, ...), so results do not
//! depend on the order in which work items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type RunRng = ChaCha8Rng;

/// Derives an independent generator for `(seed, labels...)`.
pub fn substream(seed: u64, labels: &[&str]) -> RunRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}
