//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream whose 256-bit
//! key is
//!
//! ```text
//! SHA-256( "linerank-stream-v1" || seed as u64 LE || len(tag) as u64 LE || tag || index as u64 LE )
//! ```
//!
//! so a stream is fully determined by `(seed, tag, index)`. Replications use
//! their replication number as `index`, which makes results independent of
//! the order in which worker threads pick them up. Normal and exponential
//! variates are produced by `rand_distr`'s ziggurat samplers on top of the
//! stream.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Draws for the off-diagonal covariance factor `A`.
pub const TAG_COVARIANCE: &str = "covariance";
/// Injection observations used by the ranking algorithms.
pub const TAG_INJECTIONS: &str = "injections";
/// Large Monte Carlo samples used as ground truth.
pub const TAG_GROUND_TRUTH: &str = "ground-truth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey<'a> {
    pub seed: u64,
    pub tag: &'a str,
    pub index: u64,
}

impl<'a> StreamKey<'a> {
    pub fn new(seed: u64, tag: &'a str, index: u64) -> Self {
        StreamKey { seed, tag, index }
    }

    pub fn key_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"linerank-stream-v1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.tag.len() as u64).to_le_bytes());
        hasher.update(self.tag.as_bytes());
        hasher.update(self.index.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key_bytes())
    }
}
