//! Labeled, counter-based random streams.
//!
//! Every consumer of randomness derives its own generator from the run seed,
//! a stream label and a tuple of counters, so the values drawn by one
//! consumer never depend on how many values another consumer drew, and
//! parallel evaluation order cannot change the sampled values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used across the crate.
pub mod label {
    pub const NOISE: u64 = 0x6e6f_6973_65;
    pub const INIT: u64 = 0x696e_6974;
    pub const EPSILON: u64 = 0x6570_73;
    pub const MINIBATCH: u64 = 0x6d69_6e69;
    pub const METRICS: u64 = 0x6d65_7472;
    pub const GENERATE: u64 = 0x6765_6e65;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed, a label and counters into one 64-bit key.
pub fn derive_key(seed: u64, label: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(label));
    for &c in counters {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// A fresh generator for `(seed, label, counters...)`.
pub fn stream(seed: u64, label: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, label, counters))
}
