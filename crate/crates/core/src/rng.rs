//! Named random streams derived from one master seed.
//!
//! Each stream is keyed by `(purpose, a, b)`, e.g. `(Variation, generation,
//! pair)`, so the numbers a consumer sees never depend on how many draws some
//! other consumer made, or in which order parallel work finished.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init = 1,
    Selection = 2,
    Variation = 3,
    Evaluation = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, purpose: Purpose, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    for word in [purpose as u64, a, b] {
        h = splitmix64(h ^ word);
    }
    h
}

pub fn stream(master: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, a, b))
}
