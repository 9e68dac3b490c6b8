//! Deterministic counter-based randomness.
//!
//! Every random draw in the workspace comes from a ChaCha8 generator
//! keyed by `(run seed, stream id, step)`. A given (stream, step) pair
//! always yields the same values, so resuming a run at step `k` consumes
//! exactly the stream a fresh run would have consumed; no generator state
//! is ever serialized. Draws are sampled at 64-bit and narrowed, so the
//! f32 and f64 code paths see the same underlying stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Stream identifiers. Fixed so that adding a consumer never perturbs the
/// draws of existing ones.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const TIMESTEP: u64 = 4;
    pub const COND_DROP: u64 = 5;
    pub const SAMPLER: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const REFERENCE: u64 = 8;
}

/// Root of all randomness for one run.
#[derive(Clone, Copy, Debug)]
pub struct StreamRng {
    seed: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for one (stream, step) cell.
    pub fn at(&self, stream: u64, step: u64) -> Draws {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream.to_le_bytes());
        key[16..24].copy_from_slice(&step.to_le_bytes());
        key[24..32].copy_from_slice(&0x46494452u64.to_le_bytes());
        Draws { rng: ChaCha8Rng::from_seed(key) }
    }
}

/// Sequence of draws inside one (stream, step) cell.
pub struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    pub fn normal_f64(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        self.rng.gen_range(0..n)
    }

    pub fn normal<S: Scalar>(&mut self) -> S {
        S::from_f64_lossy(self.normal_f64())
    }

    pub fn normal_vec<S: Scalar>(&mut self, n: usize) -> Vec<S> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn normal_tensor<S: Scalar>(&mut self, shape: &[usize]) -> Tensor<S> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, self.normal_vec(n)).expect("consistent shape")
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range<S: Scalar>(&mut self, lo: f64, hi: f64) -> S {
        S::from_f64_lossy(lo + (hi - lo) * self.uniform_f64())
    }

    pub fn uniform_vec<S: Scalar>(&mut self, n: usize, lo: f64, hi: f64) -> Vec<S> {
        (0..n).map(|_| self.uniform_range(lo, hi)).collect()
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
