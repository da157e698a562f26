//! Named, seed-derived random substreams.
//!
//! Every consumer of randomness derives its own stream from the run seed and
//! a label such as `"rollout"` plus an index, so the number of workers never
//! changes which numbers a given item sees.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the substream `label/index` under `seed`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(seed ^ fnv1a(label.as_bytes())) ^ splitmix(index))
}

pub fn substream(seed: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, label, index))
}

pub fn from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
