//! Keyed 64-bit hashing used wherever randomness must be a pure function of
//! seeds and indices (public coin, per-site send trials, derived seeds).
//!
//! The mixer is the SplitMix64 finalizer; chaining it over the key words gives
//! independent-looking streams for distinct tuples.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ mix64(word.wrapping_add(GOLDEN)))
}

/// Hash of `key` followed by `words`.
pub fn keyed_hash(key: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(key ^ GOLDEN), |state, &w| absorb(state, w))
}

/// Seed for an independent sub-stream identified by `tags`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    keyed_hash(seed, tags)
}

/// Uniform in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1]` with 53 bits of precision.
#[inline]
pub fn unit_f64_open_zero(h: u64) -> f64 {
    ((h >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
