//! Hashing and seed-derivation helpers shared across the crate.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 hex digest of a value's canonical JSON serialization.
///
/// Used to fingerprint configurations, vocabularies, and trained
/// parameters. Two values fingerprint equal iff they serialize to the
/// same JSON bytes; f64 values round-trip exactly through serde_json,
/// so parameter fingerprints are bit-faithful.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprint serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    hex(&digest)
}

/// Lowercase hex encoding.
pub fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Derive an independent 64-bit seed from a base seed and an index.
///
/// SplitMix64 finalizer over `seed + (index + 1) * GOLDEN_GAMMA`. Distinct
/// (seed, index) pairs give statistically independent streams, so parallel
/// tasks can each build their own RNG without sharing state.
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let a = fingerprint(&vec![1u32, 2, 3]);
        let b = fingerprint(&vec![1u32, 2, 3]);
        let c = fingerprint(&vec![1u32, 2, 4]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|ch| ch.is_ascii_hexdigit()));
    }

    #[test]
    fn splitmix_streams_differ_by_index_and_seed() {
        let s0 = splitmix64(42, 0);
        let s1 = splitmix64(42, 1);
        let t0 = splitmix64(43, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, t0);
        assert_eq!(s0, splitmix64(42, 0));
    }

    #[test]
    fn hex_encodes_lowercase() {
        assert_eq!(hex(&[0x00, 0xff, 0x0a]), "00ff0a");
    }
}
