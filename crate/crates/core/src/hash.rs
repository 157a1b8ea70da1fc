//! Key-to-home mapping shared by every table in the crate.

/// Full-avalanche 64-bit finalizer (MurmurHash3 `fmix64`).
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

/// Hasher for a fixed seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyHasher {
    salt: u64,
    mask: usize,
}

impl KeyHasher {
    pub fn new(seed: u64, capacity: usize) -> Self {
        debug_assert!(capacity.is_power_of_two());
        KeyHasher {
            salt: mix64(seed ^ 0x9e37_79b9_7f4a_7c15),
            mask: capacity - 1,
        }
    }

    #[inline]
    pub fn home(&self, key: u64) -> usize {
        mix64(key ^ self.salt) as usize & self.mask
    }
}
