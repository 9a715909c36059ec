//! Dynamic dilated filtering.
//!
//! A kernel generation unit (KGU) maps guidance features to a field of
//! position-specific 3×3 kernels. The kernel transformation unit (KTU)
//! reads that field as dilated kernels: rather than materializing
//! zero-inflated 7×7 or 11×11 kernels, the adaptive convolution samples
//! its taps `d` pixels apart. The pyramid module runs three such branches
//! at dilations 1, 3 and 5 on channel-reduced decoder features and fuses
//! them with the reduced features themselves.

use crate::dense::{add_channels, with_grads, DenseBlock, DenseCache};
use crate::error::{ensure_dim, Error, Result};
use crate::init::Initializer;
use crate::params::{prefixed, ParamSet};
use crate::tensor::{
    concat_channels, conv2d, conv2d_backward, for_each_chunk, ConvParams, Shape, Tensor,
};

/// Taps per kernel.
pub const TAPS: usize = 9;

/// Per-position 3×3 kernel weights, `(N, 9·G, H, W)`.
///
/// Tap `k = (l+1)·3 + (m+1)` of group `g` weighs the input at row offset
/// `l·d` and column offset `m·d`, with `l, m ∈ {−1, 0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelField(Tensor);

impl KernelField {
    pub fn new(raw: Tensor) -> Result<Self> {
        let c = raw.shape().c;
        if c == 0 || !c.is_multiple_of(TAPS) {
            return Err(Error::contract(
                "KernelField::new",
                format!("channel count {c} is not a positive multiple of {TAPS}"),
            ));
        }
        Ok(KernelField(raw))
    }

    pub fn raw(&self) -> &Tensor {
        &self.0
    }

    pub fn into_raw(self) -> Tensor {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    pub fn groups(&self) -> usize {
        self.0.shape().c / TAPS
    }

    #[inline]
    pub fn weight(&self, n: usize, group: usize, tap: usize, h: usize, w: usize) -> f64 {
        self.0.get(n, group * TAPS + tap, h, w)
    }
}

/// One pyramid branch: branch `j ∈ {1,2,3}` uses dilation `2j − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSpec {
    index: usize,
}

impl BranchSpec {
    pub const ALL: [BranchSpec; 3] = [
        BranchSpec { index: 1 },
        BranchSpec { index: 2 },
        BranchSpec { index: 3 },
    ];

    pub fn new(index: usize) -> Result<Self> {
        if (1..=3).contains(&index) {
            Ok(BranchSpec { index })
        } else {
            Err(Error::contract(
                "BranchSpec::new",
                format!("branch {index} not in 1..=3"),
            ))
        }
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn dilation(self) -> usize {
        2 * self.index - 1
    }

    /// Side of the square neighbourhood a dilated 3×3 kernel covers.
    pub fn footprint(self) -> usize {
        2 * self.dilation() + 1
    }
}

#[inline]
fn tap_offsets(tap: usize, d: usize) -> (isize, isize) {
    let l = (tap / 3) as isize - 1;
    let m = (tap % 3) as isize - 1;
    (l * d as isize, m * d as isize)
}

/// Rows/cols `i` of a length-`len` axis with `i + off` also in range.
#[inline]
fn shifted_range(len: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off.max(0)).max(0) as usize;
    (lo.min(len), hi.max(lo.min(len)))
}

fn check_operands(op: &'static str, f_r: Shape, kernels: &KernelField, d: usize) -> Result<usize> {
    let ks = kernels.shape();
    ensure_dim(op, "batch", f_r.n, ks.n)?;
    ensure_dim(op, "height", f_r.h, ks.h)?;
    ensure_dim(op, "width", f_r.w, ks.w)?;
    if d == 0 {
        return Err(Error::contract(op, "dilation must be positive"));
    }
    let g = kernels.groups();
    if !f_r.c.is_multiple_of(g) {
        return Err(Error::contract(
            op,
            format!(
                "{} feature channels cannot be split into {g} kernel groups",
                f_r.c
            ),
        ));
    }
    Ok(f_r.c / g)
}

/// Adaptive convolution of `f_r` with a position-specific kernel field.
///
/// The field holds `G` groups of nine taps; channel `c` of `f_r` is filtered
/// with group `c / (C/G)`. With a single group every channel shares the same
/// nine weights at each position; with `G = C` each channel has its own.
/// Out-of-range taps read zero (padding of width `d`), and the output keeps
/// the input's spatial size.
pub fn adaptive_conv(f_r: &Tensor, kernels: &KernelField, d: usize) -> Result<Tensor> {
    let s = f_r.shape();
    let per_group = check_operands("adaptive_conv", s, kernels, d)?;
    let (h, w) = (s.h, s.w);
    let mut out = Tensor::zeros(s);
    let taps: Vec<_> = (0..TAPS)
        .map(|tap| {
            let (dy, dx) = tap_offsets(tap, d);
            (tap, dy, dx, shifted_range(h, dy), shifted_range(w, dx))
        })
        .filter(|&(_, _, _, (y0, y1), (x0, x1))| y0 < y1 && x0 < x1)
        .collect();
    for_each_chunk(out.data_mut(), s.plane(), TAPS, |(idx, dst)| {
        let (n, c) = (idx / s.c, idx % s.c);
        let group = c / per_group;
        let src = f_r.plane(n, c);
        let planes: Vec<&[f64]> = (0..TAPS)
            .map(|t| kernels.raw().plane(n, group * TAPS + t))
            .collect();
        for (y, row) in dst.chunks_exact_mut(w).enumerate() {
            for &(tap, dy, dx, (y0, y1), (x0, x1)) in &taps {
                if !(y0..y1).contains(&y) {
                    continue;
                }
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let o = &mut row[x0..x1];
                let k = &planes[tap][y * w + x0..y * w + x1];
                let f = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                for ((o, k), f) in o.iter_mut().zip(k).zip(f) {
                    *o += k * f;
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of [`adaptive_conv`] with respect to both operands.
///
/// The kernel gradient sums over every channel that reads the group.
pub fn adaptive_conv_backward(
    f_r: &Tensor,
    kernels: &KernelField,
    d: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, KernelField)> {
    let s = f_r.shape();
    let per_group = check_operands("adaptive_conv_backward", s, kernels, d)?;
    crate::tensor::ensure_same_shape("adaptive_conv_backward", s, grad_out.shape())?;
    let (h, w) = (s.h, s.w);

    let mut grad_f = Tensor::zeros(s);
    for_each_chunk(grad_f.data_mut(), s.plane(), TAPS, |(idx, dst)| {
        let (n, c) = (idx / s.c, idx % s.c);
        let group = c / per_group;
        let go = grad_out.plane(n, c);
        for tap in 0..TAPS {
            let kp = kernels.raw().plane(n, group * TAPS + tap);
            let (dy, dx) = tap_offsets(tap, d);
            let (y0, y1) = shifted_range(h, dy);
            let (x0, x1) = shifted_range(w, dx);
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let g = &mut dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                let k = &kp[y * w + x0..y * w + x1];
                let u = &go[y * w + x0..y * w + x1];
                for ((g, k), u) in g.iter_mut().zip(k).zip(u) {
                    *g += k * u;
                }
            }
        }
    });

    let ks = kernels.shape();
    let groups = kernels.groups();
    let mut grad_k = Tensor::zeros(ks);
    for_each_chunk(grad_k.data_mut(), TAPS * s.plane(), TAPS, |(idx, dst)| {
        let (n, group) = (idx / groups, idx % groups);
        for (tap, gk) in dst.chunks_mut(s.plane()).enumerate() {
            let (dy, dx) = tap_offsets(tap, d);
            let (y0, y1) = shifted_range(h, dy);
            let (x0, x1) = shifted_range(w, dx);
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            for c in group * per_group..(group + 1) * per_group {
                let go = grad_out.plane(n, c);
                let src = f_r.plane(n, c);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let g = &mut gk[y * w + x0..y * w + x1];
                    let u = &go[y * w + x0..y * w + x1];
                    let f = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for ((g, u), f) in g.iter_mut().zip(u).zip(f) {
                        *g += u * f;
                    }
                }
            }
        }
    });

    Ok((grad_f, KernelField(grad_k)))
}

/// Nine kernel planes `[9g, 9g+9)` of a multi-group field.
pub fn ktu_split(raw: &KernelField, group: usize) -> Result<KernelField> {
    if group >= raw.groups() {
        return Err(Error::contract(
            "ktu_split",
            format!("group {group} out of range for {} groups", raw.groups()),
        ));
    }
    Ok(KernelField(
        raw.raw()
            .narrow_channels(group * TAPS, (group + 1) * TAPS)?,
    ))
}

/// Channel widths of a pyramid module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DdpmConfig {
    /// Channels of the decoder features and of the module output.
    pub channels: usize,
    /// Channels after the 1×1 reduction; also the number of kernel groups.
    pub reduced: usize,
    /// Channels of the guidance (mixed) features fed to the KGUs.
    pub guide_channels: usize,
    pub kgu_growth: usize,
    pub kgu_layers: usize,
}

impl Default for DdpmConfig {
    fn default() -> Self {
        DdpmConfig {
            channels: 64,
            reduced: 16,
            guide_channels: 64,
            kgu_growth: 32,
            kgu_layers: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdpmParams {
    /// 1×1 reduction of the decoder features.
    pub reduce: ConvParams,
    /// One kernel generation unit per branch, each emitting `9·reduced` channels.
    pub kgu: [DenseBlock; 3],
    /// 3×3 fusion of `[reduced, B₁, B₂, B₃]` back to `channels`.
    pub fuse: ConvParams,
}

impl DdpmParams {
    pub fn init(cfg: DdpmConfig, init: &mut Initializer) -> Self {
        let reduce = init.conv(cfg.reduced, cfg.channels, 1);
        let kgu = std::array::from_fn(|_| {
            DenseBlock::init(
                cfg.guide_channels,
                cfg.kgu_growth,
                cfg.kgu_layers,
                TAPS * cfg.reduced,
                init,
            )
        });
        let fuse = init.conv(cfg.channels, 4 * cfg.reduced, 3);
        DdpmParams { reduce, kgu, fuse }
    }

    pub fn reduced(&self) -> usize {
        self.reduce.out_ch()
    }
}

impl ParamSet for DdpmParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("reduce", self.reduce.tensors());
        for (j, k) in self.kgu.iter().enumerate() {
            v.extend(prefixed(&format!("kgu{}", j + 1), k.tensors()));
        }
        v.extend(prefixed("fuse", self.fuse.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = prefixed("reduce", self.reduce.tensors_mut());
        for (j, k) in self.kgu.iter_mut().enumerate() {
            v.extend(prefixed(&format!("kgu{}", j + 1), k.tensors_mut()));
        }
        v.extend(prefixed("fuse", self.fuse.tensors_mut()));
        v
    }
}

/// Kernel generation unit: dense block producing a `9·C′`-channel field.
pub fn kgu_forward(f_tm: &Tensor, params: &DenseBlock) -> Result<KernelField> {
    KernelField::new(params.forward(f_tm)?)
}

#[derive(Clone, Debug)]
pub struct DdpmCache {
    f_drgb: Tensor,
    reduced: Tensor,
    kgu: Vec<(DenseCache, KernelField)>,
    merged: Tensor,
}

#[derive(Clone, Debug)]
pub struct DdpmGrads {
    pub f_drgb: Tensor,
    pub f_tm: Tensor,
    pub params: DdpmParams,
}

fn check_ddpm_inputs(f_drgb: &Tensor, f_tm: &Tensor, params: &DdpmParams) -> Result<()> {
    let (a, b) = (f_drgb.shape(), f_tm.shape());
    ensure_dim("ddpm_forward", "batch", a.n, b.n)?;
    ensure_dim("ddpm_forward", "height", a.h, b.h)?;
    ensure_dim("ddpm_forward", "width", a.w, b.w)?;
    for k in &params.kgu {
        ensure_dim(
            "ddpm_forward",
            "kernel field channels",
            TAPS * params.reduced(),
            k.out_ch(),
        )?;
    }
    ensure_dim(
        "ddpm_forward",
        "fuse input channels",
        4 * params.reduced(),
        params.fuse.in_ch(),
    )
}

/// `F(concat(R(x), K₁(t) ⊗₁ R(x), K₂(t) ⊗₃ R(x), K₃(t) ⊗₅ R(x)))`.
pub fn ddpm_forward(f_drgb: &Tensor, f_tm: &Tensor, params: &DdpmParams) -> Result<Tensor> {
    Ok(ddpm_forward_cached(f_drgb, f_tm, params)?.0)
}

pub fn ddpm_forward_cached(
    f_drgb: &Tensor,
    f_tm: &Tensor,
    params: &DdpmParams,
) -> Result<(Tensor, DdpmCache)> {
    check_ddpm_inputs(f_drgb, f_tm, params)?;
    let reduced = conv2d(f_drgb, &params.reduce)?;
    let mut kgu = Vec::with_capacity(3);
    let mut branches = Vec::with_capacity(3);
    for (branch, unit) in BranchSpec::ALL.iter().zip(&params.kgu) {
        let (raw, cache) = unit.forward_cached(f_tm)?;
        let field = KernelField::new(raw)?;
        branches.push(adaptive_conv(&reduced, &field, branch.dilation())?);
        kgu.push((cache, field));
    }
    let merged = concat_channels(&[&reduced, &branches[0], &branches[1], &branches[2]])?;
    let out = conv2d(&merged, &params.fuse)?;
    Ok((
        out,
        DdpmCache {
            f_drgb: f_drgb.clone(),
            reduced,
            kgu,
            merged,
        },
    ))
}

pub fn ddpm_backward(
    cache: &DdpmCache,
    params: &DdpmParams,
    grad_out: &Tensor,
) -> Result<DdpmGrads> {
    let c = params.reduced();
    let fuse = conv2d_backward(&cache.merged, &params.fuse, grad_out)?;
    let mut grad_reduced = fuse.input.narrow_channels(0, c)?;
    let mut grad_tm: Option<Tensor> = None;
    let mut kgu_grads = Vec::with_capacity(3);
    for (j, ((dense_cache, field), unit)) in cache.kgu.iter().zip(&params.kgu).enumerate() {
        let gb = fuse.input.narrow_channels((j + 1) * c, (j + 2) * c)?;
        let d = BranchSpec::ALL[j].dilation();
        let (gr, gk) = adaptive_conv_backward(&cache.reduced, field, d, &gb)?;
        add_channels(&mut grad_reduced, &gr, 0);
        let (gt, gp) = unit.backward(dense_cache, gk.raw())?;
        match grad_tm.as_mut() {
            Some(acc) => acc.add_assign(&gt)?,
            None => grad_tm = Some(gt),
        }
        kgu_grads.push(gp);
    }
    let red = conv2d_backward(&cache.f_drgb, &params.reduce, &grad_reduced)?;
    let kgu: [DenseBlock; 3] = kgu_grads
        .try_into()
        .map_err(|_| Error::contract("ddpm_backward", "expected three branches"))?;
    Ok(DdpmGrads {
        f_drgb: red.input,
        f_tm: grad_tm.expect("three branches"),
        params: DdpmParams {
            reduce: with_grads(&params.reduce, red.weight, red.bias),
            kgu,
            fuse: with_grads(&params.fuse, fuse.weight, fuse.bias),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::testing::random_tensor;

    fn one_hot_field(n: usize, h: usize, w: usize, tap: usize) -> KernelField {
        KernelField::new(Tensor::from_fn(Shape::new(n, TAPS, h, w), |_, k, _, _| {
            if k == tap {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    #[test]
    fn branch_geometry() {
        let d: Vec<_> = BranchSpec::ALL.iter().map(|b| b.dilation()).collect();
        let f: Vec<_> = BranchSpec::ALL.iter().map(|b| b.footprint()).collect();
        assert_eq!(d, [1, 3, 5]);
        assert_eq!(f, [3, 7, 11]);
        assert!(BranchSpec::new(4).is_err());
    }

    #[test]
    fn field_requires_multiple_of_nine() {
        assert!(KernelField::new(Tensor::zeros(Shape::new(1, 10, 2, 2))).is_err());
        assert!(KernelField::new(Tensor::zeros(Shape::new(1, 0, 2, 2))).is_err());
        assert_eq!(
            KernelField::new(Tensor::zeros(Shape::new(1, 18, 2, 2)))
                .unwrap()
                .groups(),
            2
        );
    }

    #[test]
    fn centre_tap_is_identity() {
        let f = random_tensor(Shape::new(2, 3, 5, 6), 1);
        for d in [1, 3, 5] {
            let out = adaptive_conv(&f, &one_hot_field(2, 5, 6, 4), d).unwrap();
            assert_eq!(out, f);
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let f = random_tensor(Shape::new(1, 2, 4, 4), 1);
        let k = KernelField::new(Tensor::zeros(Shape::new(1, 9, 4, 4))).unwrap();
        let out = adaptive_conv(&f, &k, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn top_left_tap_shifts_down_right() {
        let f = random_tensor(Shape::new(1, 2, 5, 5), 2);
        let out = adaptive_conv(&f, &one_hot_field(1, 5, 5, 0), 1).unwrap();
        for c in 0..2 {
            for h in 0..5 {
                for w in 0..5 {
                    let expected = if h == 0 || w == 0 {
                        0.0
                    } else {
                        f[[0, c, h - 1, w - 1]]
                    };
                    assert_eq!(out[[0, c, h, w]], expected);
                }
            }
        }
    }

    #[test]
    fn matches_loop_transliteration() {
        let f = random_tensor(Shape::new(1, 2, 5, 5), 3);
        let k = KernelField::new(random_tensor(Shape::new(1, 9, 5, 5), 4)).unwrap();
        let out = adaptive_conv(&f, &k, 3).unwrap();
        let r = reference::adaptive_conv(&f, &k, 3);
        assert!(out.max_abs_diff(&r) <= 1e-12);
    }

    #[test]
    fn grouped_field_uses_one_group_per_channel() {
        let f = random_tensor(Shape::new(2, 4, 6, 5), 5);
        let k = KernelField::new(random_tensor(Shape::new(2, 36, 6, 5), 6)).unwrap();
        for d in [1, 3, 5] {
            let out = adaptive_conv(&f, &k, d).unwrap();
            for c in 0..4 {
                let fc = f.narrow_channels(c, c + 1).unwrap();
                let kc = ktu_split(&k, c).unwrap();
                let expected = adaptive_conv(&fc, &kc, d).unwrap();
                assert_eq!(out.narrow_channels(c, c + 1).unwrap(), expected);
            }
        }
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let f = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let k = KernelField::new(Tensor::zeros(Shape::new(1, 9, 4, 5))).unwrap();
        assert!(matches!(
            adaptive_conv(&f, &k, 1),
            Err(Error::Shape { dim: "width", .. })
        ));
    }

    #[test]
    fn backward_of_zero_gradient_is_zero() {
        let f = random_tensor(Shape::new(1, 2, 4, 4), 7);
        let k = KernelField::new(random_tensor(Shape::new(1, 9, 4, 4), 8)).unwrap();
        let (gf, gk) = adaptive_conv_backward(&f, &k, 3, &Tensor::zeros(f.shape())).unwrap();
        assert!(gf.data().iter().all(|&v| v == 0.0));
        assert!(gk.raw().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_field_passes_gradient_through() {
        let f = random_tensor(Shape::new(1, 1, 4, 4), 9);
        let mut delta = Tensor::zeros(f.shape());
        delta[[0, 0, 2, 1]] = 1.0;
        let (gf, _) = adaptive_conv_backward(&f, &one_hot_field(1, 4, 4, 4), 5, &delta).unwrap();
        assert_eq!(gf, delta);
    }

    #[test]
    fn ktu_split_partitions_the_field() {
        let raw = KernelField::new(Tensor::from_fn(Shape::new(1, 144, 2, 2), |_, c, _, _| {
            c as f64
        }))
        .unwrap();
        let first = ktu_split(&raw, 0).unwrap();
        for k in 0..9 {
            assert!(first.raw().plane(0, k).iter().all(|&v| v == k as f64));
        }
        let last = ktu_split(&raw, 15).unwrap();
        assert_eq!(last.raw().plane(0, 0)[0], 135.0);
        assert_eq!(last.raw().plane(0, 8)[0], 143.0);
        let parts: Vec<Tensor> = (0..16)
            .map(|g| ktu_split(&raw, g).unwrap().into_raw())
            .collect();
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(&concat_channels(&refs).unwrap(), raw.raw());
        assert!(ktu_split(&raw, 16).is_err());
    }

    #[test]
    fn kgu_emits_144_channels() {
        let params = DenseBlock::init(64, 32, 4, 144, &mut Initializer::new(2));
        let field = kgu_forward(&random_tensor(Shape::new(2, 64, 3, 4), 1), &params).unwrap();
        assert_eq!(field.shape(), Shape::new(2, 144, 3, 4));
        assert_eq!(field.groups(), 16);
    }

    #[test]
    fn kgu_of_zero_input_with_zero_biases_is_zero() {
        let mut params = DenseBlock::init(8, 4, 4, 18, &mut Initializer::new(2));
        for l in &mut params.layers {
            l.bias.fill(0.0);
        }
        params.projection.bias.fill(0.0);
        let field = kgu_forward(&Tensor::zeros(Shape::new(1, 8, 4, 4)), &params).unwrap();
        assert!(field.raw().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ddpm_preserves_shape() {
        let params = DdpmParams::init(DdpmConfig::default(), &mut Initializer::new(5));
        let x = random_tensor(Shape::new(2, 64, 8, 8), 1);
        let t = random_tensor(Shape::new(2, 64, 8, 8), 2);
        assert_eq!(
            ddpm_forward(&x, &t, &params).unwrap().shape(),
            Shape::new(2, 64, 8, 8)
        );
    }

    #[test]
    fn ddpm_rejects_spatial_mismatch() {
        let cfg = DdpmConfig {
            channels: 4,
            reduced: 2,
            guide_channels: 3,
            kgu_growth: 2,
            kgu_layers: 2,
        };
        let params = DdpmParams::init(cfg, &mut Initializer::new(5));
        let x = Tensor::zeros(Shape::new(1, 4, 5, 5));
        let t = Tensor::zeros(Shape::new(1, 3, 5, 4));
        assert!(ddpm_forward(&x, &t, &params).is_err());
    }
}
