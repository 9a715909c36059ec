//! Dense rank-4 tensors in `(batch, channels, rows, cols)` layout and the
//! standard neural primitives built on them.
//!
//! All operations are pure: inputs are borrowed, outputs freshly allocated.
//! Work is split across output planes only, and every output element is
//! reduced in a fixed serial order, so results do not depend on the number
//! of worker threads.

mod activation;
mod conv;
mod pool;
mod resize;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, Activation};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
pub use pool::{avg_pool, avg_pool_backward};
pub use resize::{resize_bilinear, resize_bilinear_backward, upsample2x, upsample2x_backward};

use crate::error::{ensure_dim, Error, Result};
use rayon::prelude::*;
use std::ops::{Index, IndexMut};

/// Total multiply-adds below which a kernel runs on the calling thread.
const PARALLEL_MIN_WORK: usize = 1 << 15;

/// Calls `f((i, chunk))` for every `chunk_len`-sized piece of `data`. Runs
/// on the worker pool when `data.len() · cost` is large enough to pay for
/// the dispatch. Each chunk is written by exactly one call, so the result
/// does not depend on the number of workers.
pub(crate) fn for_each_chunk<F>(data: &mut [f64], chunk_len: usize, cost: usize, f: F)
where
    F: Fn((usize, &mut [f64])) + Send + Sync,
{
    if chunk_len == 0 {
        return;
    }
    if data.len().saturating_mul(cost) < PARALLEL_MIN_WORK || rayon::current_num_threads() == 1 {
        data.chunks_mut(chunk_len).enumerate().for_each(f);
    } else {
        data.par_chunks_mut(chunk_len).enumerate().for_each(f);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major `f64` tensor; `n` outermost, `w` innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        ensure_dim("Tensor::from_vec", "data length", shape.len(), data.len())?;
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.offset(n, c, h, w)]
    }

    /// Contiguous `h × w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Slice holding all channels of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.shape.c * self.shape.plane();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.shape.c * self.shape.plane();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on differing shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        ensure_same_shape("Tensor::add", self.shape, other.shape)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        ensure_same_shape("Tensor::add_assign", self.shape, other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Samples `n0..n1` as a new tensor.
    pub fn narrow_batch(&self, n0: usize, n1: usize) -> Result<Tensor> {
        if n0 > n1 || n1 > self.shape.n {
            return Err(Error::contract(
                "Tensor::narrow_batch",
                format!("range {n0}..{n1} outside batch of {}", self.shape.n),
            ));
        }
        let s = self.shape.c * self.shape.plane();
        Ok(Tensor {
            shape: Shape::new(n1 - n0, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[n0 * s..n1 * s].to_vec(),
        })
    }

    /// Channels `c0..c1` as a new tensor.
    pub fn narrow_channels(&self, c0: usize, c1: usize) -> Result<Tensor> {
        let sh = self.shape;
        if c0 > c1 || c1 > sh.c {
            return Err(Error::contract(
                "Tensor::narrow_channels",
                format!("range {c0}..{c1} outside {} channels", sh.c),
            ));
        }
        let out_shape = Shape::new(sh.n, c1 - c0, sh.h, sh.w);
        let p = sh.plane();
        let mut data = Vec::with_capacity(out_shape.len());
        for n in 0..sh.n {
            let base = (n * sh.c) * p;
            data.extend_from_slice(&self.data[base + c0 * p..base + c1 * p]);
        }
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }
}

impl Index<[usize; 4]> for Tensor {
    type Output = f64;

    #[inline]
    fn index(&self, [n, c, h, w]: [usize; 4]) -> &f64 {
        &self.data[self.shape.offset(n, c, h, w)]
    }
}

impl IndexMut<[usize; 4]> for Tensor {
    #[inline]
    fn index_mut(&mut self, [n, c, h, w]: [usize; 4]) -> &mut f64 {
        let off = self.shape.offset(n, c, h, w);
        &mut self.data[off]
    }
}

pub(crate) fn ensure_same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    ensure_dim(op, "batch", a.n, b.n)?;
    ensure_dim(op, "channels", a.c, b.c)?;
    ensure_dim(op, "height", a.h, b.h)?;
    ensure_dim(op, "width", a.w, b.w)
}

/// Channel-wise concatenation of tensors sharing batch and spatial dims.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat_channels", "no inputs"))?
        .shape();
    let mut total_c = 0;
    for t in parts {
        let s = t.shape();
        ensure_dim("concat_channels", "batch", first.n, s.n)?;
        ensure_dim("concat_channels", "height", first.h, s.h)?;
        ensure_dim("concat_channels", "width", first.w, s.w)?;
        total_c += s.c;
    }
    let shape = Shape::new(first.n, total_c, first.h, first.w);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..first.n {
        for t in parts {
            data.extend_from_slice(t.sample(n));
        }
    }
    Ok(Tensor { shape, data })
}

/// Inverse of [`concat_channels`]: cut `t` into consecutive channel blocks.
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let total: usize = sizes.iter().sum();
    ensure_dim("split_channels", "channels", total, t.shape().c)?;
    let mut out = Vec::with_capacity(sizes.len());
    let mut c0 = 0;
    for &s in sizes {
        out.push(t.narrow_channels(c0, c0 + s)?);
        c0 += s;
    }
    Ok(out)
}

/// Stack equally shaped tensors along the batch axis.
pub fn concat_batch(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat_batch", "no inputs"))?
        .shape();
    let mut n = 0;
    let mut data = Vec::new();
    for t in parts {
        let s = t.shape();
        ensure_dim("concat_batch", "channels", first.c, s.c)?;
        ensure_dim("concat_batch", "height", first.h, s.h)?;
        ensure_dim("concat_batch", "width", first.w, s.w)?;
        n += s.n;
        data.extend_from_slice(t.data());
    }
    Ok(Tensor {
        shape: Shape::new(n, first.c, first.h, first.w),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_row_major() {
        let s = Shape::new(2, 3, 4, 5);
        assert_eq!(s.offset(0, 0, 0, 1), 1);
        assert_eq!(s.offset(0, 0, 1, 0), 5);
        assert_eq!(s.offset(0, 1, 0, 0), 20);
        assert_eq!(s.offset(1, 0, 0, 0), 60);
        assert_eq!(s.len(), 120);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                expected: 4,
                got: 3,
                ..
            }
        ));
    }

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Tensor::from_fn(Shape::new(2, 2, 3, 3), |n, c, h, w| {
            (n * 100 + c * 10 + h * 3 + w) as f64
        });
        let b = Tensor::from_fn(Shape::new(2, 1, 3, 3), |n, _, h, w| {
            -((n * 9 + h * 3 + w) as f64)
        });
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), Shape::new(2, 3, 3, 3));
        assert_eq!(cat[[1, 2, 2, 1]], b[[1, 0, 2, 1]]);
        let parts = split_channels(&cat, &[2, 1]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let b = Tensor::zeros(Shape::new(1, 1, 3, 4));
        assert!(matches!(
            concat_channels(&[&a, &b]),
            Err(Error::Shape { dim: "width", .. })
        ));
    }
}
