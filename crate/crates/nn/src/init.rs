use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::tensor::Tensor2D;

/// Deterministic parameter initializer backed by SplitMix64.
///
/// Draws `uniform(-1/√fan_in, 1/√fan_in)` for weights and biases alike.
pub struct SeededInit {
    rng: SplitMix64,
}

impl SeededInit {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, rows: usize, cols: usize, fan_in: usize) -> Tensor2D {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        Tensor2D::from_vec(rows, cols, data).expect("sized above")
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}
