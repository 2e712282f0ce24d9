//! Seed derivation. Every phase of a run draws from its own stream keyed by
//! (seed, stream, step), so consuming more randomness in one phase never
//! shifts another, and any phase can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream tags.
pub const EVAL_STREAM: u64 = 1;
pub const PROTOCOL_STREAM: u64 = 2;
pub const INIT_STREAM: u64 = 3;
pub const TRAIN_STREAM: u64 = 4;
pub const PRETRAIN_STREAM: u64 = 5;
pub const BC_STREAM: u64 = 6;
pub const DATA_STREAM: u64 = 7;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generator determined only by (seed, stream, step).
pub fn derived_rng(seed: u64, stream: u64, step: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ splitmix64(stream) ^ step))
}
