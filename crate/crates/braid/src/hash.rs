//! Content hashing for integrity checks.
//!
//! FNV-1a over raw bytes. Used for frozen-encoder output hashes, parameter
//! snapshots, and per-section file checksums. Not cryptographic; it only has
//! to detect accidental corruption and unintended parameter drift.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// Incremental FNV-1a hasher.
#[derive(Clone, Debug)]
pub struct Fnv64 {
    state: u64,
}

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64 { state: FNV_OFFSET }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= u64::from(b);
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn update_f64(&mut self, v: f64) {
        self.update(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Hash a byte slice in one call.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.update(bytes);
    h.finish()
}

/// Hash a slice of f64 values through their little-endian bit patterns.
///
/// Bit-level, so `0.0` and `-0.0` hash differently; byte-equality is exactly
/// what the frozen-state checks require.
pub fn fnv64_f64s(values: &[f64]) -> u64 {
    let mut h = Fnv64::new();
    for &v in values {
        h.update_f64(v);
    }
    h.finish()
}
