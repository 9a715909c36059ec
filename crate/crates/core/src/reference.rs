//! Direct loop implementations used as independent oracles.
//!
//! Nothing here is optimized. Each function follows the defining formula
//! as literally as possible and shares no code with the production kernels
//! beyond the tensor container.

#![allow(clippy::needless_range_loop)]

use crate::dense::DenseBlock;
use crate::dynfilter::{BranchSpec, DdpmParams, KernelField};
use crate::metrics::{BinaryMask, SaliencyMap};
use crate::tensor::{ConvParams, Shape, Tensor};

/// Cross-correlation by explicit summation over every tap.
pub fn conv2d(input: &Tensor, p: &ConvParams) -> Tensor {
    let s = input.shape();
    let k = p.kernel();
    let (pad, st, dil) = (p.padding as isize, p.stride, p.dilation);
    let oh = (s.h + 2 * p.padding - dil * (k - 1) - 1) / st + 1;
    let ow = (s.w + 2 * p.padding - dil * (k - 1) - 1) / st + 1;
    let mut out = Tensor::zeros(Shape::new(s.n, p.out_ch(), oh, ow));
    for n in 0..s.n {
        for oc in 0..p.out_ch() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias[oc];
                    for ic in 0..s.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * st + ky * dil) as isize - pad;
                                let ix = (ox * st + kx * dil) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += p.weight[[oc, ic, ky, kx]]
                                    * input[[n, ic, iy as usize, ix as usize]];
                            }
                        }
                    }
                    out[[n, oc, oy, ox]] = acc;
                }
            }
        }
    }
    out
}

/// Same convolution with the dilation baked into a zero-inflated kernel of
/// side `d·(k−1)+1`, then applied at dilation 1.
pub fn conv2d_inflated(input: &Tensor, p: &ConvParams) -> Tensor {
    let k = p.kernel();
    let d = p.dilation;
    let big = d * (k - 1) + 1;
    let ws = p.weight.shape();
    let mut inflated = Tensor::zeros(Shape::new(ws.n, ws.c, big, big));
    for o in 0..ws.n {
        for i in 0..ws.c {
            for ky in 0..k {
                for kx in 0..k {
                    inflated[[o, i, ky * d, kx * d]] = p.weight[[o, i, ky, kx]];
                }
            }
        }
    }
    let q = ConvParams {
        weight: inflated,
        bias: p.bias.clone(),
        stride: p.stride,
        padding: p.padding,
        dilation: 1,
    };
    conv2d(input, &q)
}

/// Windowed mean with the divisor counting in-bounds elements only.
pub fn avg_pool(input: &Tensor, k: usize, stride: usize, pad: usize) -> Tensor {
    let s = input.shape();
    let oh = (s.h + 2 * pad - k) / stride + 1;
    let ow = (s.w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for dy in 0..k {
                        for dx in 0..k {
                            let y = (oy * stride + dy) as isize - pad as isize;
                            let x = (ox * stride + dx) as isize - pad as isize;
                            if y >= 0 && x >= 0 && (y as usize) < s.h && (x as usize) < s.w {
                                sum += input[[n, c, y as usize, x as usize]];
                                count += 1;
                            }
                        }
                    }
                    out[[n, c, oy, ox]] = sum / count as f64;
                }
            }
        }
    }
    out
}

/// The adaptive convolution written as its defining quadruple loop: pad
/// `f_r` with `d` zeros on every side, walk `h, w` over the interior of the
/// padded canvas and crop the result back to the input size.
pub fn adaptive_conv(f_r: &Tensor, kernels: &KernelField, d: usize) -> Tensor {
    let s = f_r.shape();
    let (hp, wp) = (s.h + 2 * d, s.w + 2 * d);
    let mut padded = Tensor::zeros(Shape::new(s.n, s.c, hp, wp));
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for w in 0..s.w {
                    padded[[n, c, h + d, w + d]] = f_r[[n, c, h, w]];
                }
            }
        }
    }
    let per_group = s.c / kernels.groups();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = c / per_group;
            for h in d..s.h + d {
                for w in d..s.w + d {
                    let mut acc = 0.0;
                    for l in -1isize..=1 {
                        for m in -1isize..=1 {
                            let k = ((l + 1) * 3 + (m + 1)) as usize;
                            let y = (h as isize + l * d as isize) as usize;
                            let x = (w as isize + m * d as isize) as usize;
                            acc += kernels.weight(n, g, k, h - d, w - d) * padded[[n, c, y, x]];
                        }
                    }
                    out[[n, c, h - d, w - d]] = acc;
                }
            }
        }
    }
    out
}

fn relu(t: &Tensor) -> Tensor {
    t.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let (sa, sb) = (a.shape(), b.shape());
    Tensor::from_fn(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), |n, c, h, w| {
        if c < sa.c {
            a[[n, c, h, w]]
        } else {
            b[[n, c - sa.c, h, w]]
        }
    })
}

pub fn dense_block(input: &Tensor, block: &DenseBlock) -> Tensor {
    let mut features = input.clone();
    for layer in &block.layers {
        let y = relu(&conv2d(&features, layer));
        features = concat(&features, &y);
    }
    conv2d(&features, &block.projection)
}

/// The pyramid module composed from the oracles above; channel `c` of the
/// reduced features is filtered by kernel group `c`.
pub fn ddpm(f_drgb: &Tensor, f_tm: &Tensor, params: &DdpmParams) -> Tensor {
    let reduced = conv2d(f_drgb, &params.reduce);
    let mut merged = reduced.clone();
    for (branch, unit) in BranchSpec::ALL.iter().zip(&params.kgu) {
        let field = KernelField::new(dense_block(f_tm, unit)).expect("9·C′ channels");
        let b = adaptive_conv(&reduced, &field, branch.dilation());
        merged = concat(&merged, &b);
    }
    conv2d(&merged, &params.fuse)
}

/// Precision and recall at threshold `t`, recounted from scratch.
pub fn pr_at(pred: &SaliencyMap, gt: &BinaryMask, t: u8) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let on = (p * 255.0).round() as u8 >= t;
        if on && g {
            tp += 1;
        } else if on {
            fp += 1;
        } else if g {
            fn_ += 1;
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (div(tp, tp + fp), div(tp, tp + fn_))
}

/// Maximum F over all 256 thresholds, each evaluated independently.
pub fn f_max(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let mut best = 0.0f64;
    for t in 0..=255u8 {
        let (p, r) = pr_at(pred, gt, t);
        let f = if 0.3 * p + r == 0.0 {
            0.0
        } else {
            1.3 * p * r / (0.3 * p + r)
        };
        best = best.max(f);
    }
    best
}

fn grid(width: usize, values: &[f64]) -> Vec<Vec<f64>> {
    values.chunks(width).map(|r| r.to_vec()).collect()
}

fn bool_grid(width: usize, values: &[bool]) -> Vec<Vec<f64>> {
    values
        .chunks(width)
        .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Structure measure written out on 2-D grids.
pub fn s_measure(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let p = grid(pred.width(), pred.values());
    let g = bool_grid(gt.width(), gt.values());
    let (h, w) = (g.len(), g[0].len());
    let total = (h * w) as f64;
    let y_mean: f64 = g.iter().flatten().sum::<f64>() / total;
    let p_mean: f64 = p.iter().flatten().sum::<f64>() / total;
    if y_mean == 0.0 {
        return 1.0 - p_mean;
    }
    if y_mean == 1.0 {
        return p_mean;
    }
    let eps = f64::EPSILON;
    let s_object = |vals: Vec<f64>| {
        let n = vals.len() as f64;
        let x = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        2.0 * x / (x * x + 1.0 + var.sqrt() + eps)
    };
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if g[y][x] == 1.0 {
                fg.push(p[y][x] * g[y][x]);
            } else {
                bg.push((1.0 - p[y][x]) * (1.0 - g[y][x]));
            }
        }
    }
    let object = y_mean * s_object(fg) + (1.0 - y_mean) * s_object(bg);

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if g[y][x] == 1.0 {
                rows.push(y as f64);
                cols.push(x as f64);
            }
        }
    }
    let cy = (rows.iter().sum::<f64>() / rows.len() as f64).round_ties_even() as usize + 1;
    let cx = (cols.iter().sum::<f64>() / cols.len() as f64).round_ties_even() as usize + 1;
    let (cx, cy) = (cx.min(w), cy.min(h));
    let ssim = |y0: usize, y1: usize, x0: usize, x1: usize| {
        let n = ((y1 - y0) * (x1 - x0)) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let (mut mx, mut my) = (0.0, 0.0);
        for y in y0..y1 {
            for x in x0..x1 {
                mx += p[y][x];
                my += g[y][x];
            }
        }
        mx /= n;
        my /= n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for y in y0..y1 {
            for x in x0..x1 {
                vx += (p[y][x] - mx).powi(2);
                vy += (g[y][x] - my).powi(2);
                cxy += (p[y][x] - mx) * (g[y][x] - my);
            }
        }
        let d = (n - 1.0).max(1.0);
        let a = 4.0 * mx * my * (cxy / d);
        let b = (mx * mx + my * my) * (vx / d + vy / d);
        if a != 0.0 {
            a / (b + eps)
        } else if b == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let w1 = (cx * cy) as f64 / total;
    let w2 = (cy * (w - cx)) as f64 / total;
    let w3 = ((h - cy) * cx) as f64 / total;
    let w4 = 1.0 - w1 - w2 - w3;
    let region = w1 * ssim(0, cy, 0, cx)
        + w2 * ssim(0, cy, cx, w)
        + w3 * ssim(cy, h, 0, cx)
        + w4 * ssim(cy, h, cx, w);
    (0.5 * object + 0.5 * region).clamp(0.0, 1.0)
}

/// Enhanced alignment evaluated pixel by pixel from its definition.
pub fn e_measure(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let n = pred.len() as f64;
    let thr = (2.0 * pred.values().iter().sum::<f64>() / n).min(1.0);
    let b: Vec<f64> = pred
        .values()
        .iter()
        .map(|&v| if v >= thr && v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let g: Vec<f64> = gt
        .values()
        .iter()
        .map(|&v| if v { 1.0 } else { 0.0 })
        .collect();
    let mb = b.iter().sum::<f64>() / n;
    let mg = g.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    for i in 0..b.len() {
        let xi = if mg == 0.0 || mg == 1.0 {
            if b[i] == g[i] {
                1.0
            } else {
                -1.0
            }
        } else {
            let (pb, pg) = (b[i] - mb, g[i] - mg);
            if pb * pb + pg * pg == 0.0 {
                0.0
            } else {
                2.0 * pb * pg / (pb * pb + pg * pg)
            }
        };
        acc += (xi + 1.0).powi(2) / 4.0;
    }
    acc / n
}

/// Weighted F-measure with nearest-foreground lookup by exhaustive search.
pub fn weighted_fmeasure(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let (w, h) = (gt.width(), gt.height());
    let g = gt.values();
    let fg: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| g[y * w + x])
        .collect();
    if fg.is_empty() {
        return 0.0;
    }
    let e: Vec<f64> = (0..w * h)
        .map(|i| (pred.values()[i] - if g[i] { 1.0 } else { 0.0 }).abs())
        .collect();
    let mut et = e.clone();
    let mut dst = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if g[y * w + x] {
                continue;
            }
            // Minimize (squared distance, column, row).
            let best = fg
                .iter()
                .map(|&(fy, fx)| {
                    let d2 = (fy as i64 - y as i64).pow(2) + (fx as i64 - x as i64).pow(2);
                    (d2, fx, fy)
                })
                .min()
                .expect("non-empty");
            et[y * w + x] = e[best.2 * w + best.1];
            dst[y * w + x] = (best.0 as f64).sqrt();
        }
    }
    let mut kernel = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(dx * dx + dy * dy) / 50.0).exp();
            ksum += *v;
        }
    }
    let mut ea = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let (yy, xx) = (y as i64 + i as i64 - 3, x as i64 + j as i64 - 3);
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        acc += v / ksum * et[yy as usize * w + xx as usize];
                    }
                }
            }
            ea[y * w + x] = acc;
        }
    }
    let mut ew = vec![0.0; w * h];
    for i in 0..w * h {
        let min_e = if g[i] && ea[i] < e[i] { ea[i] } else { e[i] };
        let b = if g[i] {
            1.0
        } else {
            2.0 - ((0.5f64).ln() / 5.0 * dst[i]).exp()
        };
        ew[i] = min_e * b;
    }
    let n_fg = fg.len() as f64;
    let ew_fg: f64 = (0..w * h).filter(|&i| g[i]).map(|i| ew[i]).sum();
    let ew_bg: f64 = (0..w * h).filter(|&i| !g[i]).map(|i| ew[i]).sum();
    let tpw = n_fg - ew_fg;
    let r = 1.0 - ew_fg / n_fg;
    let p = tpw / (tpw + ew_bg + f64::EPSILON);
    2.0 * r * p / (r + p + f64::EPSILON)
}

/// PGM header `(magic, width, height, maxval, payload offset)` found by
/// cutting every line at `#` and splitting on whitespace.
pub fn pgm_header(bytes: &[u8]) -> Option<(String, usize, usize, usize, usize)> {
    let mut tokens: Vec<(String, usize)> = Vec::new();
    let mut line_start = 0;
    while tokens.len() < 4 && line_start < bytes.len() {
        let line_end = bytes[line_start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| line_start + i);
        let line = &bytes[line_start..line_end];
        let content = &line[..line.iter().position(|&b| b == b'#').unwrap_or(line.len())];
        let mut i = 0;
        while i < content.len() && tokens.len() < 4 {
            if content[i].is_ascii_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            while i < content.len() && !content[i].is_ascii_whitespace() {
                i += 1;
            }
            let text = String::from_utf8_lossy(&content[start..i]).into_owned();
            tokens.push((text, line_start + i));
        }
        line_start = line_end + 1;
    }
    if tokens.len() < 4 {
        return None;
    }
    let num = |k: usize| tokens[k].0.parse::<usize>().ok();
    Some((
        tokens[0].0.clone(),
        num(1)?,
        num(2)?,
        num(3)?,
        tokens[3].1 + 1,
    ))
}
