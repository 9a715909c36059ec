use super::{for_each_chunk, Shape, Tensor};
use crate::error::{ensure_dim, Error, Result};

fn pool_dims(
    op: &'static str,
    s: Shape,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    if k == 0 || stride == 0 {
        return Err(Error::contract(
            op,
            "window size and stride must be positive",
        ));
    }
    if pad >= k {
        return Err(Error::contract(
            op,
            format!("padding {pad} must be smaller than window {k}"),
        ));
    }
    if s.h + 2 * pad < k || s.w + 2 * pad < k {
        return Err(Error::contract(
            op,
            format!(
                "{}x{} input with padding {pad} cannot hold a {k}x{k} window",
                s.h, s.w
            ),
        ));
    }
    Ok((
        (s.h + 2 * pad - k) / stride + 1,
        (s.w + 2 * pad - k) / stride + 1,
    ))
}

/// Clipped window extent `[lo, hi)` along one axis for output index `o`.
#[inline]
fn window(o: usize, stride: usize, pad: usize, k: usize, len: usize) -> (usize, usize) {
    let start = (o * stride) as isize - pad as isize;
    let lo = start.max(0) as usize;
    let hi = ((start + k as isize).max(0) as usize).min(len);
    (lo, hi.max(lo))
}

/// Average pooling with a `k × k` window. Padding is excluded from the
/// divisor: each output is the mean of the in-bounds elements only.
pub fn avg_pool(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let s = input.shape();
    let (oh, ow) = pool_dims("avg_pool", s, k, stride, pad)?;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let in_plane = s.plane();
    for_each_chunk(out.data_mut(), oh * ow, k * k, |(idx, dst)| {
        let src = &input.data()[idx * in_plane..(idx + 1) * in_plane];
        for oy in 0..oh {
            let (y0, y1) = window(oy, stride, pad, k, s.h);
            for ox in 0..ow {
                let (x0, x1) = window(ox, stride, pad, k, s.w);
                let mut acc = 0.0;
                for y in y0..y1 {
                    for v in &src[y * s.w + x0..y * s.w + x1] {
                        acc += v;
                    }
                }
                dst[oy * ow + ox] = acc / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    });
    Ok(out)
}

pub fn avg_pool_backward(
    input_shape: Shape,
    k: usize,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<Tensor> {
    let (oh, ow) = pool_dims("avg_pool_backward", input_shape, k, stride, pad)?;
    let gs = grad_out.shape();
    ensure_dim("avg_pool_backward", "grad height", oh, gs.h)?;
    ensure_dim("avg_pool_backward", "grad width", ow, gs.w)?;
    ensure_dim("avg_pool_backward", "grad channels", input_shape.c, gs.c)?;
    ensure_dim("avg_pool_backward", "grad batch", input_shape.n, gs.n)?;
    let s = input_shape;
    let mut grad = Tensor::zeros(s);
    for_each_chunk(grad.data_mut(), s.plane(), k * k, |(idx, dst)| {
        let g = &grad_out.data()[idx * oh * ow..(idx + 1) * oh * ow];
        for oy in 0..oh {
            let (y0, y1) = window(oy, stride, pad, k, s.h);
            for ox in 0..ow {
                let (x0, x1) = window(ox, stride, pad, k, s.w);
                let share = g[oy * ow + ox] / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for v in &mut dst[y * s.w + x0..y * s.w + x1] {
                        *v += share;
                    }
                }
            }
        }
    });
    Ok(grad)
}
