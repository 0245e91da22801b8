//! Seed derivation.
//!
//! Every random stream in the pipeline is a `ChaCha8Rng` seeded from a base
//! seed and a stream tag, so independent components never share a stream and
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over `base` and `stream`.
pub fn derive(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, stream: u64) -> ChaCha8Rng {
    rng(derive(base, stream))
}

/// Stream tags used across the pipeline.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const CLUSTER_S_NEG: u64 = 11;
    pub const CLUSTER_NS_POS: u64 = 12;
    pub const CLUSTER_NS_NEG: u64 = 13;
    pub const BAGS: u64 = 20;
    pub const EASY_ENSEMBLE: u64 = 30;
}
