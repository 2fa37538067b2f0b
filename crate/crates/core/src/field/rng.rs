use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{ImageField, Shape};
use crate::scalar::Scalar;

/// Deterministic random stream keyed by a 64-bit seed.
///
/// Backed by ChaCha8, so a given seed produces the same stream on every run.
/// Independent sub-streams are obtained with [`SeededRng::derive`], which
/// hashes `(seed, label, index)` into a fresh 256-bit key.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `(seed, label, index)`.
    pub fn derive(seed: u64, label: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Sub-stream of this generator's root seed; does not consume from `self`.
    pub fn fork(&self, label: &str, index: u64) -> Self {
        Self::derive(self.seed, label, index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for SeededRng {
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

/// Field of i.i.d. `N(0, 1)` entries.
pub fn sample_standard_gaussian<T: Scalar>(rng: &mut SeededRng, shape: Shape) -> ImageField<T> {
    ImageField::from_fn(shape, |_| T::lit(rng.standard_normal()))
}
