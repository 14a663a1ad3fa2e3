//! Stable seed derivation for parallel runs.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit hash of a word sequence. Independent of thread
/// scheduling, so runs can execute in any order.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5350_4743_u64, |h, &p| splitmix64(h ^ splitmix64(p)))
}
