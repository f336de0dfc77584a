//! FNV-1a 64-bit hashing.
//!
//! One fixed, well-known hash is used everywhere a stable digest is
//! needed — matrix-file checksums in reference bundles and n-gram
//! bucketing in the text-divergence analysis — so results are
//! reproducible across platforms and releases.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Digest rendered the way bundle manifests store it: 16 lowercase hex
/// digits, zero-padded.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}
