use super::{for_each_chunk, Shape, Tensor};
use crate::error::{ensure_dim, Error, Result};

/// Per-output-index interpolation taps `(i0, i1, frac)` along one axis,
/// half-pixel (align-corners false) convention.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of every plane to `out_h × out_w`.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::contract(
            "resize_bilinear",
            "spatial dims must be positive",
        ));
    }
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w));
    for_each_chunk(out.data_mut(), out_h * out_w, 4, |(idx, dst)| {
        let src = &input.data()[idx * s.plane()..(idx + 1) * s.plane()];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
            let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = (1.0 - fx) * r0[x0] + fx * r0[x1];
                let bot = (1.0 - fx) * r1[x0] + fx * r1[x1];
                dst[oy * out_w + ox] = (1.0 - fy) * top + fy * bot;
            }
        }
    });
    Ok(out)
}

pub fn resize_bilinear_backward(input_shape: Shape, grad_out: &Tensor) -> Result<Tensor> {
    let s = input_shape;
    let gs = grad_out.shape();
    ensure_dim("resize_bilinear_backward", "grad batch", s.n, gs.n)?;
    ensure_dim("resize_bilinear_backward", "grad channels", s.c, gs.c)?;
    let ty = taps(s.h, gs.h);
    let tx = taps(s.w, gs.w);
    let mut grad = Tensor::zeros(s);
    for_each_chunk(grad.data_mut(), s.plane(), 4, |(idx, dst)| {
        let g = &grad_out.data()[idx * gs.plane()..(idx + 1) * gs.plane()];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[oy * gs.w + ox];
                dst[y0 * s.w + x0] += (1.0 - fy) * (1.0 - fx) * v;
                dst[y0 * s.w + x1] += (1.0 - fy) * fx * v;
                dst[y1 * s.w + x0] += fy * (1.0 - fx) * v;
                dst[y1 * s.w + x1] += fy * fx * v;
            }
        }
    });
    Ok(grad)
}

/// Bilinear ×2 upsampling.
pub fn upsample2x(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    resize_bilinear(input, 2 * s.h, 2 * s.w)
}

pub fn upsample2x_backward(input_shape: Shape, grad_out: &Tensor) -> Result<Tensor> {
    let gs = grad_out.shape();
    ensure_dim(
        "upsample2x_backward",
        "grad height",
        2 * input_shape.h,
        gs.h,
    )?;
    ensure_dim("upsample2x_backward", "grad width", 2 * input_shape.w, gs.w)?;
    resize_bilinear_backward(input_shape, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_tensor;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(Shape::new(2, 3, 5, 4), -1.25);
        let y = upsample2x(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 3, 10, 8));
        assert!(y.data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn single_pixel_fills_block() {
        let x = Tensor::full(Shape::new(1, 1, 1, 1), 0.7);
        assert_eq!(upsample2x(&x).unwrap().data(), &[0.7; 4]);
    }

    #[test]
    fn two_by_two_matches_closed_form() {
        // Half-pixel mapping for ×2: output i samples input (i + 0.5)/2 − 0.5,
        // clamped at 0, giving 0, 0.25, 0.75, 1 (the last clamps to index 1).
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0., 1., 2., 3.]).unwrap();
        let y = upsample2x(&x).unwrap();
        let coord = [0.0, 0.25, 0.75, 1.0];
        for (oy, &sy) in coord.iter().enumerate() {
            for (ox, &sx) in coord.iter().enumerate() {
                // f(y, x) = 2y + x is bilinear, so interpolation is exact.
                let expected: f64 = 2.0 * sy + sx;
                assert!((y[[0, 0, oy, ox]] - expected).abs() <= 1e-15, "({oy},{ox})");
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        let x = random_tensor(Shape::new(1, 2, 3, 5), 2);
        for (oh, ow) in [(6, 10), (7, 4), (12, 20), (3, 5)] {
            let y = resize_bilinear(&x, oh, ow).unwrap();
            let u = random_tensor(y.shape(), 3);
            let g = resize_bilinear_backward(x.shape(), &u).unwrap();
            assert!((y.dot(&u) - x.dot(&g)).abs() <= 1e-12);
        }
    }
}
