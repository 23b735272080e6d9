//! Seed derivation. Every stochastic component draws from its own ChaCha
//! stream keyed by `(base seed, purpose, index)`, so adding a consumer never
//! shifts another consumer's random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_tag(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    splitmix(splitmix(base ^ hash_tag(tag)).wrapping_add(index))
}

pub fn rng(base: u64, tag: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(base, tag, index))
}
