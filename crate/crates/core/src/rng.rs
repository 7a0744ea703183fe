//! Counter-based random streams.
//!
//! Every consumer of randomness asks for a stream by name plus a tuple of
//! counters (step, episode, role, turn, ...). Streams never share state, so
//! the order in which concurrent work is scheduled cannot change any sample.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a 64-bit seed for the named stream at the given counters.
pub fn derive_seed(seed: u64, name: &str, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(name.as_bytes()));
    for &c in counters {
        h = splitmix64(h ^ c.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn stream(seed: u64, name: &str, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, counters))
}

/// Stable 64-bit hash of a token n-gram, used by the featurizer.
pub(crate) fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}
