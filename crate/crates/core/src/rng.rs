//! Seedable random source used everywhere randomness is needed
//! (initialization, augmentation, shuffling, synthetic data).
//!
//! Backed by ChaCha8: the stream is fully determined by the 64-bit seed, so
//! any run with the same seed reproduces the same draws. Cross-language
//! bit-equality is not a goal; cross-run determinism is.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[lo, hi)`; a degenerate range returns `lo`.
    /// Always consumes exactly one draw from the stream.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> Result<f32> {
        if lo > hi {
            return Err(Error::InvalidRange(format!("uniform bounds {lo} > {hi}")));
        }
        let u: f32 = self.inner.gen();
        Ok(lo + (hi - lo) * u)
    }

    /// Gaussian draw. `std == 0` returns `mean` exactly without consuming
    /// from the stream.
    pub fn normal(&mut self, mean: f32, std: f32) -> Result<f32> {
        if std < 0.0 {
            return Err(Error::InvalidRange(format!("negative std {std}")));
        }
        if std == 0.0 {
            return Ok(mean);
        }
        let dist = Normal::new(mean, std)
            .map_err(|e| Error::InvalidRange(format!("normal({mean}, {std}): {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }

    /// Uniform index in `[0, n)`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            xs.swap(i, j);
        }
    }
}

/// Mixes a base seed with a tag (worker index, epoch, class id) into an
/// independent child seed. SplitMix64 finalizer.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
