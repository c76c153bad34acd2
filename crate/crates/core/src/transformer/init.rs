//! Seeded parameter initialization and the fixed positional table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::Tensor;

/// Deterministic weight initializer. Draw order is part of the model
/// definition: the same seed and build order always give the same weights.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in [-a, a] with a = sqrt(6 / (rows + cols)).
    pub fn xavier(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| (self.rng.gen_range(-a..a)) as f32)
            .collect();
        Tensor::new(vec![rows, cols], data)
    }

    /// Gaussian entries, for embedding tables.
    pub fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Result<Tensor> {
        // Box-Muller on uniform draws; two values per pair, extras dropped.
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = self.rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u2;
            data.push((r * t.cos() * std) as f32);
            if data.len() < n {
                data.push((r * t.sin() * std) as f32);
            }
        }
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros_vec(&mut self, n: usize) -> Tensor {
        Tensor::zeros(vec![n])
    }

    pub fn ones_vec(&mut self, n: usize) -> Result<Tensor> {
        Tensor::new(vec![n], vec![1.0; n])
    }
}

/// Sinusoidal position table, rows = positions, cols = channels. Even
/// channels carry sin, odd channels cos, sharing the even channel's rate.
pub fn positional_encoding(max_len: usize, d_model: usize) -> Result<Tensor> {
    let mut data = vec![0.0f32; max_len * d_model];
    for p in 0..max_len {
        for i in 0..d_model {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d_model as f64);
            let angle = p as f64 / rate;
            data[p * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
        }
    }
    Tensor::new(vec![max_len, d_model], data)
}
