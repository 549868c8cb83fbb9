//! Named, reproducible random streams.
//!
//! A run has one 64-bit seed. Each consumer asks for a stream by name; the
//! stream seed is `seed ^ fnv1a64(name)`, which feeds a ChaCha8 generator.
//! ChaCha output is specified bit-for-bit, so the same seed yields the same
//! numbers on every platform, and adding a new stream name never changes the
//! numbers drawn from existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// 64-bit FNV-1a hash of a stream name.
pub fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stream_seed(seed: u64, name: &str) -> u64 {
    seed ^ fnv1a64(name)
}

pub fn stream(seed: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name))
}
