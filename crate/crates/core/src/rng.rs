//! Seed plumbing. Every random stream in the crate is a ChaCha8 generator
//! seeded through [`derive_seed`], so results depend only on the seeds in a
//! run configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    mix64(base ^ mix64(fnv1a(stream.as_bytes())))
}

/// Derives an independent seed for an indexed sub-stream (fold, iteration).
pub fn derive_indexed(base: u64, stream: &str, index: u64) -> u64 {
    mix64(derive_seed(base, stream).wrapping_add(mix64(index)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
