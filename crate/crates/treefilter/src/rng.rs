//! Seed derivation for reproducible, per-entity random streams.
//!
//! Every randomized component derives its own generator from a run seed and
//! a domain tag so that streams are independent and stable under reordering.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a run seed and a tag (e.g. a node id or trial index).
pub fn derive_seed(run_seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(run_seed) ^ splitmix64(tag.wrapping_add(0x51a7_b0d5_c4e3_f291)))
}

/// Seeded generator for the (run seed, tag) pair.
pub fn seeded_rng(run_seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(run_seed, tag))
}
