//! Seed plumbing. All randomness in the crate flows from caller-supplied
//! 64-bit seeds through ChaCha8, so results are reproducible across
//! platforms for a fixed build.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a root seed and a stream tag.
pub fn stream_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Seeded generator for the given (root seed, stream tag) pair.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, tag))
}

/// Stream tags used by the crate; fixed so results stay reproducible.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const MAPPING: u64 = 2;
    pub const HOLDOUT: u64 = 3;
    pub const REPEAT: u64 = 4;
}
