//! Seed derivation and the project-wide random generator.
//!
//! Every stochastic quantity is drawn from a ChaCha20 stream addressed by a
//! `(seed, stream)` pair, so results never depend on scheduling or thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Name recorded in output metadata.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha), per-stream keyed by (seed, index)";

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for sub-task `index` under domain `tag`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(tag)).wrapping_add(index))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

// Domain tags for derive_seed.
pub const TAG_GRAPH: u64 = 1;
pub const TAG_DATA: u64 = 2;
pub const TAG_BOOT: u64 = 3;
pub const TAG_CV: u64 = 4;
pub const TAG_PLANT: u64 = 5;
