//! Deterministic, labeled random streams.
//!
//! Every stochastic component of the engine draws from a stream derived from
//! `(base_seed, label)`. Streams with distinct labels are independent, so
//! consuming one never advances another. This is what makes shadow phases
//! non-interfering and full runs byte-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over the label bytes; stable across platforms.
fn fnv1a(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive the sub-seed for a labeled stream.
pub fn substream_seed(base_seed: u64, label: &str) -> u64 {
    splitmix64(base_seed ^ fnv1a(label))
}

/// A seeded ChaCha stream for one labeled purpose.
pub fn substream(base_seed: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(substream_seed(base_seed, label))
}
