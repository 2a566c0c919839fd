//! Deterministic seed derivation.
//!
//! All randomness in this crate flows from explicit 64-bit seeds through a
//! splitmix64-based derivation tree, so parallel execution order can never
//! change results. The simulation harness derives
//! `master -> grid cell -> replicate -> purpose`, the forest derives
//! `forest seed -> tree index -> {subsample, splits}`, and the staged model
//! derives `forest seed -> stage`.

use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser; a cheap, well-mixed 64-bit hash.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0x517c_c1b7_2722_0a95)))
}

/// Seeded, portable generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
