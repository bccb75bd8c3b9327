//! Deterministic random streams.
//!
//! All randomness flows from a single root seed. Each consumer derives an
//! independent stream keyed by a stage name plus an index (user index, epoch,
//! sample number, ...), so parallel and serial execution draw identical
//! values per stream regardless of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// RNG type used everywhere in the crate.
pub type Stream = ChaCha12Rng;

/// Derive an independent stream for `(stage, index)` from the root seed.
pub fn stream(root_seed: u64, stage: &str, index: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    Stream::from_seed(seed)
}

/// Derive a stream keyed by two indices (e.g. epoch and user).
pub fn stream2(root_seed: u64, stage: &str, a: u64, b: u64) -> Stream {
    stream(root_seed, stage, a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b)
}

/// Sample a standard normal vector of length `n`.
pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Sample one standard normal value.
pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}
