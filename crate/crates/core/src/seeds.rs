/// Derives an independent 64-bit seed from `base` and a tag (splitmix64 finalizer).
pub fn derive(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a pair of indices, e.g. (epoch, batch).
pub fn derive2(base: u64, a: u64, b: u64) -> u64 {
    derive(derive(base, a), b)
}
