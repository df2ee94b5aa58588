//! Seed derivation for replicated experiments.

/// One SplitMix64 step; a cheap bijective mixer on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` under `master`; a pure function of its inputs.
pub fn replicate_seed(master: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(master) ^ rep.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
