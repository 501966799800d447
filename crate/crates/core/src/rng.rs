//! Counter-based hashing and seed derivation.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a key with one more word.
#[inline]
pub fn absorb(key: u64, word: u64) -> u64 {
    mix64(key ^ mix64(word.wrapping_add(GOLDEN)))
}

/// Seed of realization `index` drawn from master seed `seed` under a domain tag,
/// so walk streams and environment streams never share a key.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    absorb(absorb(mix64(seed), tag), index)
}

/// Small SplitMix64 stream used to draw one site's transition vector.
#[derive(Debug, Clone)]
pub struct SiteStream {
    state: u64,
}

impl SiteStream {
    pub fn new(key: u64) -> Self {
        SiteStream { state: key }
    }
}

impl RngCore for SiteStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
