//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! whose seed is derived from a master seed plus a small tuple of indices, so
//! runs, episodes and individual obstacles never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng_from(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags keep unrelated consumers of the same master seed apart.
pub mod stream {
    pub const REFERENCE: u64 = 1;
    pub const PLACEMENT: u64 = 2;
    pub const OBSTACLE: u64 = 3;
    pub const AGENT_INIT: u64 = 4;
    pub const TRAJECTORIES: u64 = 5;
    pub const NETWORK_INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const EXPLORATION: u64 = 8;
    pub const EPISODES: u64 = 9;
    pub const EVALUATION: u64 = 10;
    pub const RUNS: u64 = 11;
    pub const REPLAY: u64 = 12;
}
