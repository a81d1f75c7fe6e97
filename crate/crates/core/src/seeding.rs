//! Seed derivation for reproducible parallel chains.
//!
//! Every chain gets its own ChaCha8 generator (a counter-based stream cipher
//! RNG) seeded from a mix of the master seed and the chain's identifying tags,
//! so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every chain in this crate.
pub type ChainRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `tags` into `master`; distinct tag sequences give unrelated seeds.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn chain_rng(master: u64, tags: &[u64]) -> ChainRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
