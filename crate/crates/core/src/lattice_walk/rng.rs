//! Counter-based random streams.
//!
//! A stream is ChaCha8 keyed by the 64-bit seed with the 64-bit stream id in
//! the nonce slot, so `(seed, stream_id)` addresses an independent keystream
//! and the block counter is the only state. Parallel chains never share a
//! generator; they derive their own.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser, used to expand seeds and mix stream labels.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive combination of labels into one stream id.
pub fn stream_label(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| mix64(acc ^ mix64(p)))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    bits: u64,
    bits_left: u32,
}

/// Opens the stream addressed by `(seed, stream_id)` at counter zero.
pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(stream_id);
    RngStream {
        seed,
        stream_id,
        inner,
        bits: 0,
        bits_left: 0,
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Child stream `index`, independent of the parent and of its siblings.
    pub fn substream(&self, index: u64) -> RngStream {
        derive_stream(self.seed, stream_label(&[self.stream_id, index]))
    }

    /// Uniform integer in `0..k` for `k <= 256`, consuming 8 bits at a time.
    ///
    /// Bytes at or above the largest multiple of `k` are rejected, so the
    /// result is exactly uniform.
    #[inline]
    pub fn below_small(&mut self, k: u32) -> u32 {
        debug_assert!(k > 0 && k <= 256);
        let limit = 256 - 256 % k;
        loop {
            if self.bits_left == 0 {
                self.bits = self.inner.next_u64();
                self.bits_left = 64;
            }
            let byte = (self.bits & 0xff) as u32;
            self.bits >>= 8;
            self.bits_left -= 8;
            if byte < limit {
                return byte % k;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
