//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) seeded
//! from a 64-bit value. Child streams for repetitions, bootstrap replicates
//! and algorithm phases are derived with [`child_seed`], a SplitMix64
//! finalizer applied to `(parent, index)`, so any stream can be recreated
//! from the master seed and its path without replaying its siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under `parent`.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(GOLDEN).rotate_left(17))
}

/// Seed reached by following `path` from `parent`.
pub fn path_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &i| child_seed(s, i))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed child indices for the phases that draw from a run's seed.
pub mod tags {
    pub const LABELED: u64 = 0;
    pub const UNLABELED: u64 = 1;
    pub const OPTIMIZER: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const RESAMPLE: u64 = 4;
    pub const POOL: u64 = 5;
}
