//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed and a short list of stream tags, so independent
//! consumers never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used across the crate.
pub mod stream {
    pub const SUBSET: u64 = 0x5355_4253;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const INIT: u64 = 0x494e_4954;
    pub const DROPOUT: u64 = 0x4452_4f50;
    pub const COMM: u64 = 0x434f_4d4d;
    pub const SENSE: u64 = 0x5345_4e53;
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const VALIDATION: u64 = 0x5641_4c49;
    pub const EVAL: u64 = 0x4556_414c;
    pub const CALIBRATE: u64 = 0x4341_4c49;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// A generator for the stream identified by `tags` under `base`.
pub fn stream_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
