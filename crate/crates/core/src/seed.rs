//! Seed derivation for replicates, sweep cells and per-run streams.
//!
//! `derive_seed(base, parts)` folds each part into the state with the
//! SplitMix64 finaliser:
//!
//! ```text
//! h = mix(base)
//! for p in parts: h = mix(h ^ mix(p + 0x9E3779B97F4A7C15))
//! ```
//!
//! The same inputs always give the same seed, and no state is shared between
//! derivations, so replicates and cells can be scheduled in any order.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix(base), |h, &p| mix(h ^ mix(p.wrapping_add(GOLDEN))))
}

/// Seed of replicate `index` under `base_seed`.
pub fn replicate_seed(base_seed: u64, index: usize) -> u64 {
    derive_seed(base_seed, &[index as u64])
}
