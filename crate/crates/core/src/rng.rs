//! Counter-based random streams.
//!
//! A root seed and a stream id select a ChaCha keystream; every step of a
//! chain reads its normals from a fixed window of that keystream addressed
//! by the step counter. Two samplers that consume a different number of
//! normals per step therefore still see the same leading draws at every
//! step, and any step can be replayed without running the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// log2 of the number of 32-bit keystream words reserved per counter value.
const WORDS_PER_COUNTER_LOG2: u32 = 32;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    base: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream);
        Self { base, seed, stream }
    }

    /// Stream for chain `index` derived from a base stream id.
    pub fn for_chain(seed: u64, base_stream: u64, index: u64) -> Self {
        Self::new(seed, split_stream(base_stream, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Generator positioned at the window of `counter`.
    pub fn at(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_word_pos((counter as u128) << WORDS_PER_COUNTER_LOG2);
        rng
    }
}

/// SplitMix64 finalizer applied to `(base, index)`.
pub fn split_stream(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fills `out` with independent standard normals.
pub fn fill_normals<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = StandardNormal.sample(rng);
    }
}
