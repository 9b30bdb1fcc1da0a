//! Keyed random substreams.
//!
//! Every random decision draws from a ChaCha stream whose seed is derived from
//! the global seed plus a key naming the decision (a record id, a pair of ids).
//! Results therefore do not depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stable 64-bit key for a string.
pub fn key_of(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream keyed by a list of labels.
pub fn stream(seed: u64, labels: &[&str]) -> StreamRng {
    let keys: Vec<u64> = labels.iter().map(|l| key_of(l)).collect();
    stream_from_keys(seed, &keys)
}

/// Stream keyed by precomputed label keys (see [`key_of`]).
pub fn stream_from_keys(seed: u64, keys: &[u64]) -> StreamRng {
    let mut state = splitmix(seed);
    for &k in keys {
        state = splitmix(state ^ k);
    }
    ChaCha8Rng::seed_from_u64(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_key_sensitive() {
        let a: u64 = stream(1, &["x", "y"]).random();
        let b: u64 = stream(1, &["x", "y"]).random();
        let c: u64 = stream(1, &["y", "x"]).random();
        let d: u64 = stream(2, &["x", "y"]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
