//! Random number streams.
//!
//! Every random quantity in a run comes from ChaCha8 (RFC 7539 core with 8
//! rounds, as implemented by `rand_chacha`), which is fully specified and
//! produces the same stream on every platform. Two flavors are used:
//!
//! - sequential streams ([`stream`]) for node placement and the traffic
//!   trace, seeded from the run seed plus a stream tag;
//! - keyed draws ([`keyed_uniform`]) for per-transmission Bernoulli trials.
//!   The ChaCha key is the tuple `(seed, tag, w0, w1, w2, w3)` itself, so a
//!   given transmission attempt sees the same draw regardless of what else
//!   happened in the run. Both routers and all arrival rates therefore share
//!   common random numbers for identical attempts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifies an independent random stream within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum StreamTag {
    Placement = 1,
    Traffic = 2,
    Beacon = 3,
    DataLink = 4,
}

/// Sequential generator for the given run seed and stream.
pub fn stream(seed: u64, tag: StreamTag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}

/// Uniform draw in `[0, 1)` addressed by `(seed, tag, words)`.
pub fn keyed_uniform(seed: u64, tag: StreamTag, words: [u32; 4]) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&(tag as u32).to_le_bytes());
    for (i, w) in words.iter().enumerate() {
        let at = 12 + 4 * i;
        key[at..at + 4].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key).random::<f64>()
}
