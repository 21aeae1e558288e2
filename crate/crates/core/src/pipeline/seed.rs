//! Per-phase seeds derived from one root seed.
//!
//! `derive_seed(root, phase) = splitmix64(root ^ splitmix64(fnv1a64(phase)))`.
//! Each phase gets an independent stream, so a phase can be rerun on its own
//! and still see the same randomness as in a full run.

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive_seed(root: u64, phase: &str) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a64(phase.as_bytes())))
}

/// Seed for epoch `epoch` of `phase`.
pub fn epoch_seed(root: u64, phase: &str, epoch: usize) -> u64 {
    splitmix64(derive_seed(root, phase) ^ splitmix64(epoch as u64))
}
