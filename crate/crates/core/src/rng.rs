use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OcanError, Result};
use crate::tensor::Tensor;

/// Deterministic, platform-independent random source.
#[derive(Clone, Debug)]
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

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent generator for a named sub-task, derived from the seed.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..=hi)
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.gen_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// `batch x dim` noise, i.i.d. uniform on `[-1, 1]`.
pub fn sample_noise(rng: &mut SeededRng, batch: usize, dim: usize) -> Result<Tensor> {
    if batch == 0 || dim == 0 {
        return Err(OcanError::InvalidArgument(format!(
            "noise batch and dim must be positive, got {batch}x{dim}"
        )));
    }
    let data = (0..batch * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_vec(batch, dim, data)
}
