//! Seeded random streams and deterministic substream derivation.
//!
//! Every parallel task draws from its own stream whose seed is a pure function
//! of a parent seed and the task's coordinates, so results do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a path of coordinates.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

pub fn substream(parent: u64, path: &[u64]) -> Stream {
    stream(derive_seed(parent, path))
}
