//! Seed derivation.
//!
//! Every random stream in a run is keyed by
//! `(master_seed, round, pool_id, client_id, purpose_tag)`. The mixing is
//! fixed so other implementations can reproduce it bit for bit:
//!
//! ```text
//! h = splitmix64(master_seed)
//! h = splitmix64(h ^ round)
//! h = splitmix64(h ^ pool_id)
//! h = splitmix64(h ^ client_id)
//! h = splitmix64(h ^ fnv1a64(purpose_tag))
//! ```
//!
//! `splitmix64(x)` adds `0x9E3779B97F4A7C15` (wrapping) and then applies the
//! standard finalizer with multipliers `0xBF58476D1CE4E5B9` and
//! `0x94D049BB133111EB` and shifts 30, 27, 31. `fnv1a64` is 64-bit FNV-1a
//! over the UTF-8 bytes of the tag. Each step is a bijection of `h`, so
//! changing one field with the others fixed always changes the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Placeholder id for streams not tied to a pool or client.
pub const NO_ID: u64 = u64::MAX;

pub const fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

pub fn derive_seed(
    master_seed: u64,
    round: u64,
    pool_id: u64,
    client_id: u64,
    purpose: &str,
) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ pool_id);
    h = splitmix64(h ^ client_id);
    splitmix64(h ^ fnv1a64(purpose.as_bytes()))
}

/// The generator used for every derived stream.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
