use super::Tensor;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, input: &Tensor) -> Tensor {
        match self {
            Activation::Relu => relu(input),
            Activation::Sigmoid => sigmoid(input),
        }
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    // Branch on sign so exp never overflows.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient through relu given its forward *output*.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    super::ensure_same_shape("relu_backward", output.shape(), grad_out.shape())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// Gradient through sigmoid given its forward *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    super::ensure_same_shape("sigmoid_backward", output.shape(), grad_out.shape())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= y * (1.0 - y);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::testing::random_tensor;

    fn scalar(v: f64) -> Tensor {
        Tensor::full(Shape::new(1, 1, 1, 1), v)
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(&scalar(-1.0)).data()[0], 0.0);
        assert_eq!(relu(&scalar(2.0)).data()[0], 2.0);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(&scalar(0.0)).data()[0], 0.5);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        let x = random_tensor(Shape::new(1, 2, 8, 8), 3).scale(10.0);
        let a = sigmoid(&x);
        let b = sigmoid(&x.scale(-1.0));
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p + q - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_stays_open_and_finite() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 4), vec![-30.0, -1e3, 30.0, 1e3]).unwrap();
        let y = sigmoid(&x);
        assert!(y.is_finite());
        assert!(y.data()[..2].iter().all(|&v| (0.0..0.5).contains(&v)));
        assert!(y.data()[2..].iter().all(|&v| v > 0.5 && v <= 1.0));
    }
}
