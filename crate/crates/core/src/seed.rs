//! Counter-derived random sub-streams.
//!
//! Every stochastic draw in the crate is addressed by `(seed, stream, index)`.
//! The three words are mixed with SplitMix64 into a ChaCha8 seed, so the value
//! of draw `index` never depends on how many draws were made before it or on
//! which thread made them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-stream tags. Distinct tags give statistically independent streams.
pub mod stream {
    pub const SIGNAL_LASER: u64 = 0x5349_474e;
    pub const LO_LASER: u64 = 0x4c4f_4c41;
    pub const DETECTOR: u64 = 0x4445_5445;
    pub const MODULATION: u64 = 0x4d4f_4455;
    pub const BATCH: u64 = 0x4241_5443;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const LASER_SWEEP: u64 = 0x5357_4545;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed, a stream tag and a counter.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

/// A generator for draw `index` of `stream` under `seed`.
pub fn substream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let a = derive(seed, stream, index);
    let b = splitmix64(a);
    let c = splitmix64(b);
    let d = splitmix64(c);
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([a, b, c, d]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_address_same_stream() {
        let a: Vec<u64> =
            substream(7, stream::DETECTOR, 3).sample_iter(rand::distributions::Standard).take(4).collect();
        let b: Vec<u64> =
            substream(7, stream::DETECTOR, 3).sample_iter(rand::distributions::Standard).take(4).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn neighbouring_addresses_differ() {
        let base = derive(1, stream::TRIAL, 0);
        assert_ne!(base, derive(1, stream::TRIAL, 1));
        assert_ne!(base, derive(2, stream::TRIAL, 0));
        assert_ne!(base, derive(1, stream::BATCH, 0));
    }
}
