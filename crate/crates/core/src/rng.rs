//! Deterministic seed derivation for named pipeline stages.
//!
//! Every stochastic stage derives its own 64-bit seed from the run seed and a
//! stage label, so adding a stage never shifts the random numbers seen by the
//! others. Per-item streams (one per shot) are then selected with
//! `ChaCha8Rng::set_stream`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed for stage `label`, item `index`, derived from the run seed.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(1)))
}

/// Generator for one item of a stage: seeded by the stage seed, stream = item index.
pub fn stream_rng(stage_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed);
    rng.set_stream(stream);
    rng
}
