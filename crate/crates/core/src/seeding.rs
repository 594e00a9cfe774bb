//! Seed hierarchy: every random draw in a run descends from one base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers keep independent consumers from sharing draws.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const SOFT_Q: u64 = 4;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `base`.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ stream) ^ index)
}

pub fn rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream, index))
}
