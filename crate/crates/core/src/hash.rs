//! Seedless, platform-independent hashing primitives.
//!
//! Everything that ends up in a label, a sketch or a model file is derived
//! from these functions, so their output must never change between releases.

use std::hash::{BuildHasherDefault, Hasher};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer. Bijective on `u64`.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Incremental FNV-1a over bytes with a SplitMix64 finalizer on output.
#[derive(Debug, Clone, Copy)]
pub struct StableHasher {
    state: u64,
}

impl Default for StableHasher {
    fn default() -> Self {
        StableHasher { state: FNV_OFFSET }
    }
}

impl StableHasher {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= u64::from(b);
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
    }

    #[inline]
    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    #[inline]
    pub fn finish(&self) -> u64 {
        mix64(self.state)
    }
}

/// Stable hash of a byte string.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h = StableHasher::new();
    h.write_bytes(bytes);
    h.finish()
}

pub fn stable_hash_str(s: &str) -> u64 {
    stable_hash(s.as_bytes())
}

/// Pass-through hasher for keys that are already well-mixed 64-bit hashes.
#[derive(Debug, Default, Clone, Copy)]
pub struct LabelHasher(u64);

impl Hasher for LabelHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | u64::from(b);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

pub type LabelMap<V> = std::collections::HashMap<u64, V, BuildHasherDefault<LabelHasher>>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_core_matches_reference_vectors() {
        // Published FNV-1a 64 vectors, checked before finalization.
        let mut h = StableHasher::new();
        assert_eq!(h.state, 0xcbf29ce484222325);
        h.write_bytes(b"a");
        assert_eq!(h.state, 0xaf63dc4c8601ec8c);
        let mut h = StableHasher::new();
        h.write_bytes(b"foobar");
        assert_eq!(h.state, 0x85944171f73967e8);
    }

    #[test]
    fn incremental_equals_one_shot() {
        let mut h = StableHasher::new();
        h.write_bytes(b"pro");
        h.write_bytes(b"cess");
        assert_eq!(h.finish(), stable_hash_str("process"));
        let mut h = StableHasher::new();
        h.write_u64(7);
        assert_eq!(h.finish(), stable_hash(&7u64.to_le_bytes()));
    }

    #[test]
    fn mix64_is_not_identity() {
        assert_ne!(mix64(1), 1);
        assert_ne!(mix64(1), mix64(2));
        assert_eq!(mix64(0), 0);
    }
}
