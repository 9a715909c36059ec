use crate::init::Initializer;
use crate::tensor::{ConvParams, Shape, Tensor};

pub(crate) fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    Initializer::new(seed).tensor(shape, -1.0, 1.0)
}

pub(crate) fn random_conv(
    out_ch: usize,
    in_ch: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    seed: u64,
) -> ConvParams {
    let mut init = Initializer::new(seed);
    let weight = init.tensor(Shape::new(out_ch, in_ch, k, k), -1.0, 1.0);
    let bias = (0..out_ch).map(|_| init.uniform(-1.0, 1.0)).collect();
    ConvParams::new(weight, bias, stride, padding, dilation).unwrap()
}
