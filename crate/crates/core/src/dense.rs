//! Densely connected convolution blocks.
//!
//! Layer `i` sees the channel concatenation of the block input and the
//! outputs of layers `1..i`; a final 1×1 linear projection maps the full
//! concatenation to the block's output width.

use crate::error::{ensure_dim, Result};
use crate::init::Initializer;
use crate::params::{prefixed, ParamSet};
use crate::tensor::{
    concat_channels, conv2d, conv2d_backward, relu, relu_backward, ConvParams, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    pub layers: Vec<ConvParams>,
    pub projection: ConvParams,
}

/// Forward state kept for the backward pass: the full feature
/// concatenation `[input, y₁, …, y_L]`.
#[derive(Clone, Debug)]
pub struct DenseCache {
    features: Tensor,
    in_ch: usize,
    growth: usize,
}

impl DenseBlock {
    pub fn init(
        in_ch: usize,
        growth: usize,
        n_layers: usize,
        out_ch: usize,
        init: &mut Initializer,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|i| init.conv(growth, in_ch + i * growth, 3))
            .collect();
        let projection = init.conv(out_ch, in_ch + n_layers * growth, 1);
        DenseBlock { layers, projection }
    }

    pub fn in_ch(&self) -> usize {
        self.layers
            .first()
            .map_or(self.projection.in_ch(), ConvParams::in_ch)
    }

    pub fn growth(&self) -> usize {
        self.layers.first().map_or(0, ConvParams::out_ch)
    }

    pub fn out_ch(&self) -> usize {
        self.projection.out_ch()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, DenseCache)> {
        ensure_dim(
            "dense_block",
            "input channels",
            self.in_ch(),
            input.shape().c,
        )?;
        let mut features = input.clone();
        for layer in &self.layers {
            let y = relu(&conv2d(&features, layer)?);
            features = concat_channels(&[&features, &y])?;
        }
        let out = conv2d(&features, &self.projection)?;
        let cache = DenseCache {
            features,
            in_ch: self.in_ch(),
            growth: self.growth(),
        };
        Ok((out, cache))
    }

    /// Smallest `|z|` over the pre-activations of every layer on `input`.
    pub fn relu_margin(&self, input: &Tensor) -> Result<f64> {
        ensure_dim(
            "dense_block",
            "input channels",
            self.in_ch(),
            input.shape().c,
        )?;
        let mut features = input.clone();
        let mut margin = f64::INFINITY;
        for layer in &self.layers {
            let z = conv2d(&features, layer)?;
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
            features = concat_channels(&[&features, &relu(&z)])?;
        }
        Ok(margin)
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(&self, cache: &DenseCache, grad_out: &Tensor) -> Result<(Tensor, DenseBlock)> {
        let proj = conv2d_backward(&cache.features, &self.projection, grad_out)?;
        let mut grad_features = proj.input;
        let projection = with_grads(&self.projection, proj.weight, proj.bias);

        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let c_in = cache.in_ch + i * cache.growth;
            let input = cache.features.narrow_channels(0, c_in)?;
            let y = cache.features.narrow_channels(c_in, c_in + cache.growth)?;
            let gy = grad_features.narrow_channels(c_in, c_in + cache.growth)?;
            let gz = relu_backward(&y, &gy)?;
            let g = conv2d_backward(&input, layer, &gz)?;
            add_channels(&mut grad_features, &g.input, 0);
            layers.push(with_grads(layer, g.weight, g.bias));
        }
        layers.reverse();
        let grad_input = grad_features.narrow_channels(0, cache.in_ch)?;
        Ok((grad_input, DenseBlock { layers, projection }))
    }
}

impl ParamSet for DenseBlock {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("layers", self.layers.tensors());
        v.extend(prefixed("projection", self.projection.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = prefixed("layers", self.layers.tensors_mut());
        v.extend(prefixed("projection", self.projection.tensors_mut()));
        v
    }
}

/// A `ConvParams` with `p`'s geometry holding gradient values.
pub(crate) fn with_grads(p: &ConvParams, weight: Tensor, bias: Vec<f64>) -> ConvParams {
    ConvParams {
        weight,
        bias,
        stride: p.stride,
        padding: p.padding,
        dilation: p.dilation,
    }
}

/// `dst[:, c0..c0+src.c] += src`.
pub(crate) fn add_channels(dst: &mut Tensor, src: &Tensor, c0: usize) {
    let (ds, ss) = (dst.shape(), src.shape());
    debug_assert!(ds.n == ss.n && ds.h == ss.h && ds.w == ss.w && c0 + ss.c <= ds.c);
    for n in 0..ss.n {
        for c in 0..ss.c {
            for (a, b) in dst.plane_mut(n, c0 + c).iter_mut().zip(src.plane(n, c)) {
                *a += b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::tensor::Shape;
    use crate::testing::random_tensor;

    #[test]
    fn shapes_follow_growth() {
        let block = DenseBlock::init(5, 3, 4, 7, &mut Initializer::new(1));
        assert_eq!(block.layers.len(), 4);
        assert_eq!(block.layers[3].in_ch(), 5 + 9);
        assert_eq!(block.projection.in_ch(), 17);
        let y = block
            .forward(&random_tensor(Shape::new(2, 5, 4, 6), 2))
            .unwrap();
        assert_eq!(y.shape(), Shape::new(2, 7, 4, 6));
    }

    #[test]
    fn matches_composed_conv_oracle() {
        let block = DenseBlock::init(3, 2, 4, 5, &mut Initializer::new(3));
        let x = random_tensor(Shape::new(1, 3, 5, 5), 4);
        let y = block.forward(&x).unwrap();
        let r = reference::dense_block(&x, &block);
        assert!(y.max_abs_diff(&r) <= 1e-12);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let block = DenseBlock::init(3, 2, 2, 5, &mut Initializer::new(3));
        assert!(block
            .forward(&Tensor::zeros(Shape::new(1, 4, 3, 3)))
            .is_err());
    }
}
