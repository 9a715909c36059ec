//! Deterministic seeded parameter initialization.
//!
//! Every weight and bias is drawn from `uniform(−s, s)` with
//! `s = 1/√fan_in`, using a ChaCha stream so that a seed fixes every value
//! independently of platform and thread count.

use crate::tensor::{ConvParams, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn tensor(&mut self, shape: Shape, lo: f64, hi: f64) -> Tensor {
        let data = (0..shape.len())
            .map(|_| self.rng.gen_range(lo..hi))
            .collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }

    /// Convolution with stride 1, "same" padding and fan-in scaled weights.
    pub fn conv(&mut self, out_ch: usize, in_ch: usize, k: usize) -> ConvParams {
        let s = 1.0 / ((in_ch * k * k) as f64).sqrt();
        let weight = self.tensor(Shape::new(out_ch, in_ch, k, k), -s, s);
        let bias = (0..out_ch).map(|_| self.rng.gen_range(-s..s)).collect();
        ConvParams::new(weight, bias, 1, k / 2, 1).expect("well-formed conv")
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
