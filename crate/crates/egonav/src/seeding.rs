//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline is keyed on (suite seed, episode id,
//! step, sample index) so that parallel scheduling can never change
//! results. Derivation uses SplitMix64 over the folded inputs.

/// One SplitMix64 scramble round.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a sequence of stream labels.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &label in labels {
        state = splitmix64(state ^ splitmix64(label));
    }
    state
}

/// FNV-1a hash of a string, used to fold episode ids into seed labels.
pub fn hash_label(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
