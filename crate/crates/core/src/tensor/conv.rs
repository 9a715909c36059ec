use super::{for_each_chunk, Shape, Tensor};
use crate::error::{ensure_dim, Error, Result};

/// Upper bound on the number of `f64`s in one unfolded column band.
const COL_BUDGET: usize = 1 << 17;

/// Products with at most this many multiply-adds skip the packed kernel.
const SMALL_GEMM: usize = 1 << 14;

/// Weights `(out_ch, in_ch, k, k)` plus bias and the sliding-window geometry
/// of a 2-D cross-correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvParams {
    pub fn new(
        weight: Tensor,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Self> {
        let s = weight.shape();
        ensure_dim("ConvParams::new", "kernel width", s.h, s.w)?;
        ensure_dim("ConvParams::new", "bias length", s.n, bias.len())?;
        if s.h == 0 || s.c == 0 || s.n == 0 {
            return Err(Error::contract("ConvParams::new", "empty kernel"));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::contract(
                "ConvParams::new",
                "stride and dilation must be positive",
            ));
        }
        Ok(ConvParams {
            weight,
            bias,
            stride,
            padding,
            dilation,
        })
    }

    /// Zero weights and bias, stride 1, "same" padding for odd `k`.
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        ConvParams {
            weight: Tensor::zeros(Shape::new(out_ch, in_ch, k, k)),
            bias: vec![0.0; out_ch],
            stride: 1,
            padding: k / 2,
            dilation: 1,
        }
    }

    pub fn out_ch(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_ch(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    /// Output spatial size for an `h × w` input, or an error if the window
    /// does not fit at least once.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = self.dilation * (self.kernel() - 1) + 1;
        let dim = |len: usize, name: &str| {
            let padded = len + 2 * self.padding;
            if padded < span {
                Err(Error::contract(
                    "conv2d",
                    format!("{name} {len} with padding {} is smaller than the dilated kernel span {span}", self.padding),
                ))
            } else {
                Ok((padded - span) / self.stride + 1)
            }
        };
        Ok((dim(h, "height")?, dim(w, "width")?))
    }

    pub fn param_count(&self) -> usize {
        self.weight.shape().len() + self.bias.len()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel() == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Range of output positions `o` for which `o * stride + offset` lands in
/// `[0, in_len)`, clipped to `[0, out_len)`.
#[inline]
pub(crate) fn valid_range(
    out_len: usize,
    in_len: usize,
    stride: usize,
    offset: isize,
) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset) + s - 1) / s
    };
    let room = in_len as isize - offset;
    let hi = if room <= 0 { 0 } else { (room + s - 1) / s };
    let lo = (lo as usize).min(out_len);
    let hi = (hi as usize).min(out_len);
    (lo, hi.max(lo))
}

struct Geometry {
    in_shape: Shape,
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.in_shape.c * self.k * self.k
    }

    /// Output rows per unfolded band.
    fn band_rows(&self) -> usize {
        (COL_BUDGET / (self.rows() * self.ow).max(1)).clamp(1, self.oh)
    }

    /// Unfold output rows `oy0..oy1` of one sample into `col`, laid out as
    /// `(in_ch·k·k) × (band_rows·ow)`.
    fn im2col(&self, sample: &[f64], oy0: usize, oy1: usize, col: &mut [f64]) {
        let (h, w) = (self.in_shape.h, self.in_shape.w);
        let px = (oy1 - oy0) * self.ow;
        let mut row = 0;
        for ic in 0..self.in_shape.c {
            let plane = &sample[ic * h * w..(ic + 1) * h * w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let dst = &mut col[row * px..(row + 1) * px];
                    let xoff = (kx * self.dilation) as isize - self.padding as isize;
                    let (lo, hi) = valid_range(self.ow, w, self.stride, xoff);
                    for oy in oy0..oy1 {
                        let d = &mut dst[(oy - oy0) * self.ow..(oy - oy0 + 1) * self.ow];
                        let iy = (oy * self.stride + ky * self.dilation) as isize
                            - self.padding as isize;
                        if iy < 0 || iy >= h as isize || lo >= hi {
                            d.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        d[..lo].fill(0.0);
                        d[hi..].fill(0.0);
                        if self.stride == 1 {
                            let start = (lo as isize + xoff) as usize;
                            d[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        } else {
                            for ox in lo..hi {
                                d[ox] = src[(ox as isize * self.stride as isize + xoff) as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatter-add `col` into `sample`.
    fn col2im(&self, col: &[f64], oy0: usize, oy1: usize, sample: &mut [f64]) {
        let (h, w) = (self.in_shape.h, self.in_shape.w);
        let px = (oy1 - oy0) * self.ow;
        let mut row = 0;
        for ic in 0..self.in_shape.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let src = &col[row * px..(row + 1) * px];
                    let xoff = (kx * self.dilation) as isize - self.padding as isize;
                    let (lo, hi) = valid_range(self.ow, w, self.stride, xoff);
                    for oy in oy0..oy1 {
                        let iy = (oy * self.stride + ky * self.dilation) as isize
                            - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let s = &src[(oy - oy0) * self.ow..(oy - oy0 + 1) * self.ow];
                        let base = ic * h * w + iy as usize * w;
                        for (ox, &sv) in s.iter().enumerate().take(hi).skip(lo) {
                            let ix = (ox as isize * self.stride as isize + xoff) as usize;
                            sample[base + ix] += sv;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn geometry(op: &'static str, input: Shape, p: &ConvParams) -> Result<Geometry> {
    ensure_dim(op, "input channels", p.in_ch(), input.c)?;
    let (oh, ow) = p.output_dims(input.h, input.w)?;
    Ok(Geometry {
        in_shape: input,
        oh,
        ow,
        k: p.kernel(),
        stride: p.stride,
        padding: p.padding,
        dilation: p.dilation,
    })
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if m * k * n <= SMALL_GEMM && csb == 1 && csc == 1 {
        for i in 0..m {
            let c0 = (i as isize * rsc) as usize;
            let crow = &mut c[c0..c0 + n];
            if beta == 0.0 {
                crow.fill(0.0);
            } else if beta != 1.0 {
                crow.iter_mut().for_each(|v| *v *= beta);
            }
            for l in 0..k {
                let av = a[(i as isize * rsa + l as isize * csa) as usize];
                let b0 = (l as isize * rsb) as usize;
                for (cv, bv) in crow.iter_mut().zip(&b[b0..b0 + n]) {
                    *cv += av * bv;
                }
            }
        }
        return;
    }
    // SAFETY: every caller passes slices whose extent covers the strided
    // index ranges [0, m)×[0, k), [0, k)×[0, n) and [0, m)×[0, n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Standard 2-D cross-correlation (no kernel flip) with zero padding.
///
/// Output shape is `(n, out_ch, ⌊(h + 2·pad − dil·(k−1) − 1)/stride⌋ + 1, …)`.
pub fn conv2d(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let g = geometry("conv2d", input.shape(), p)?;
    let in_s = input.shape();
    let out_shape = Shape::new(in_s.n, p.out_ch(), g.oh, g.ow);
    let mut out = Tensor::zeros(out_shape);
    let out_plane = g.oh * g.ow;
    let rows = g.rows();
    let in_sample = in_s.c * in_s.plane();

    for_each_chunk(out.data_mut(), p.out_ch() * out_plane, rows, |(n, dst)| {
        for (oc, plane) in dst.chunks_mut(out_plane).enumerate() {
            plane.fill(p.bias[oc]);
        }
        let sample = &input.data()[n * in_sample..(n + 1) * in_sample];
        let wt = p.weight.data();
        if p.is_pointwise() {
            gemm(
                p.out_ch(),
                rows,
                out_plane,
                wt,
                (rows as isize, 1),
                sample,
                (out_plane as isize, 1),
                1.0,
                dst,
                (out_plane as isize, 1),
            );
            return;
        }
        let band = g.band_rows();
        let mut col = vec![0.0; rows * band * g.ow];
        let mut oy0 = 0;
        while oy0 < g.oh {
            let oy1 = (oy0 + band).min(g.oh);
            let px = (oy1 - oy0) * g.ow;
            g.im2col(sample, oy0, oy1, &mut col);
            gemm(
                p.out_ch(),
                rows,
                px,
                wt,
                (rows as isize, 1),
                &col,
                (px as isize, 1),
                1.0,
                &mut dst[oy0 * g.ow..],
                (out_plane as isize, 1),
            );
            oy0 = oy1;
        }
    });
    Ok(out)
}

/// Gradients of `conv2d(input, p)` given the upstream gradient `grad_out`.
pub fn conv2d_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    let g = geometry("conv2d_backward", input.shape(), p)?;
    let in_s = input.shape();
    let gs = grad_out.shape();
    ensure_dim("conv2d_backward", "grad batch", in_s.n, gs.n)?;
    ensure_dim("conv2d_backward", "grad channels", p.out_ch(), gs.c)?;
    ensure_dim("conv2d_backward", "grad height", g.oh, gs.h)?;
    ensure_dim("conv2d_backward", "grad width", g.ow, gs.w)?;

    let out_ch = p.out_ch();
    let rows = g.rows();
    let out_plane = g.oh * g.ow;
    let in_sample = in_s.c * in_s.plane();

    let mut grad_bias = vec![0.0; out_ch];
    for n in 0..gs.n {
        for (oc, gb) in grad_bias.iter_mut().enumerate() {
            *gb += grad_out.plane(n, oc).iter().sum::<f64>();
        }
    }

    let mut grad_w = Tensor::zeros(p.weight.shape());
    let mut grad_in = Tensor::zeros(in_s);
    let band = if p.is_pointwise() {
        g.oh
    } else {
        g.band_rows()
    };
    let mut col = vec![0.0; rows * band * g.ow];
    let mut dcol = vec![0.0; rows * band * g.ow];

    for n in 0..in_s.n {
        let sample = &input.data()[n * in_sample..(n + 1) * in_sample];
        let gsample = grad_out.sample(n);
        let gin = grad_in.sample_mut(n);
        if p.is_pointwise() {
            // dW += dY · Xᵀ, dX = Wᵀ · dY
            gemm(
                out_ch,
                out_plane,
                rows,
                gsample,
                (out_plane as isize, 1),
                sample,
                (1, out_plane as isize),
                1.0,
                grad_w.data_mut(),
                (rows as isize, 1),
            );
            gemm(
                rows,
                out_ch,
                out_plane,
                p.weight.data(),
                (1, rows as isize),
                gsample,
                (out_plane as isize, 1),
                0.0,
                gin,
                (out_plane as isize, 1),
            );
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.oh {
            let oy1 = (oy0 + band).min(g.oh);
            let px = (oy1 - oy0) * g.ow;
            g.im2col(sample, oy0, oy1, &mut col);
            let gband = &gsample[oy0 * g.ow..];
            gemm(
                out_ch,
                px,
                rows,
                gband,
                (out_plane as isize, 1),
                &col,
                (1, px as isize),
                1.0,
                grad_w.data_mut(),
                (rows as isize, 1),
            );
            gemm(
                rows,
                out_ch,
                px,
                p.weight.data(),
                (1, rows as isize),
                gband,
                (out_plane as isize, 1),
                0.0,
                &mut dcol,
                (px as isize, 1),
            );
            g.col2im(&dcol, oy0, oy1, gin);
            oy0 = oy1;
        }
    }

    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::testing::{random_conv, random_tensor};

    #[test]
    fn identity_pointwise_kernel() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let p = ConvParams::new(
            Tensor::full(Shape::new(1, 1, 1, 1), 1.0),
            vec![0.0],
            1,
            0,
            1,
        )
        .unwrap();
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let x = random_tensor(Shape::new(2, 3, 6, 5), 1);
        let p = ConvParams::zeros(4, 3, 3);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 4, 6, 5));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_six_loop_oracle() {
        let x = random_tensor(Shape::new(1, 2, 5, 5), 7);
        let p = random_conv(3, 2, 3, 1, 1, 1, 8);
        let y = conv2d(&x, &p).unwrap();
        let r = reference::conv2d(&x, &p);
        assert!(y.max_abs_diff(&r) <= 1e-12);
    }

    #[test]
    fn strided_dilated_geometry_matches_oracle() {
        for (stride, pad, dil) in [(2, 0, 1), (2, 1, 2), (3, 2, 1), (1, 3, 3), (2, 5, 5)] {
            let x = random_tensor(Shape::new(2, 3, 9, 11), 11);
            let p = random_conv(2, 3, 3, stride, pad, dil, 12);
            let y = conv2d(&x, &p).unwrap();
            let r = reference::conv2d(&x, &p);
            assert_eq!(y.shape(), r.shape());
            assert!(
                y.max_abs_diff(&r) <= 1e-12,
                "stride {stride} pad {pad} dil {dil}"
            );
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let p = ConvParams::zeros(1, 3, 3);
        assert!(matches!(
            conv2d(&x, &p),
            Err(Error::Shape {
                dim: "input channels",
                expected: 3,
                got: 2,
                ..
            })
        ));
    }

    #[test]
    fn rejects_window_larger_than_input() {
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let mut p = ConvParams::zeros(1, 1, 5);
        p.padding = 0;
        assert!(matches!(conv2d(&x, &p), Err(Error::Contract { .. })));
    }

    #[test]
    fn valid_range_edges() {
        assert_eq!(valid_range(5, 5, 1, -1), (1, 5));
        assert_eq!(valid_range(5, 5, 1, 1), (0, 4));
        assert_eq!(valid_range(3, 5, 2, -1), (1, 3));
        assert_eq!(valid_range(4, 2, 1, 7), (0, 0));
    }
}
