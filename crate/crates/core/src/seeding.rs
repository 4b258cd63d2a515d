//! Sub-seed derivation from one master seed.
//!
//! `derive_seed(master, stream) = splitmix64(master ^ fnv1a64(stream))`;
//! indexed streams hash `"{stream}/{index}"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: &str) -> u64 {
    splitmix64(master ^ fnv1a64(stream.as_bytes()))
}

pub fn derive_indexed(master: u64, stream: &str, index: u64) -> u64 {
    derive_seed(master, &format!("{stream}/{index}"))
}

pub fn stream_rng(master: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
