use super::map::{check_dims, BinaryMask, SaliencyMap};
use crate::error::Result;

/// Balance between the object and region terms.
pub const ALPHA: f64 = 0.5;

const EPS: f64 = f64::EPSILON;

/// Structure measure `α·S_o + (1−α)·S_r`, clamped to `[0, 1]`.
///
/// An empty mask scores `1 − mean(P)` and a full mask scores `mean(P)`.
pub fn s_measure(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims("s_measure", pred, gt.width(), gt.height())?;
    let fg = gt.count();
    if fg == 0 {
        return Ok(1.0 - pred.mean());
    }
    if fg == gt.values().len() {
        return Ok(pred.mean());
    }
    let s = ALPHA * object_score(pred, gt) + (1.0 - ALPHA) * region_score(pred, gt);
    Ok(s.clamp(0.0, 1.0))
}

/// Sample mean and standard deviation with one degree of freedom removed,
/// the divisor floored at one.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0).max(1.0)).sqrt())
}

fn similarity(values: &[f64]) -> f64 {
    let (x, sigma) = mean_std(values);
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

/// Object-aware term: foreground similarity of `P` on the mask and
/// background similarity of `1 − P` off it, weighted by the mask ratio.
pub fn object_score(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if g {
            fg.push(p);
        } else {
            bg.push(1.0 - p);
        }
    }
    let u = fg.len() as f64 / gt.values().len() as f64;
    u * similarity(&fg) + (1.0 - u) * similarity(&bg)
}

/// Split point `(x, y)`: the rounded mask centroid plus one, so that the
/// left and top parts are `[0, x)` and `[0, y)`.
pub fn split_point(gt: &BinaryMask) -> (usize, usize) {
    let (w, h) = (gt.width(), gt.height());
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for (i, &g) in gt.values().iter().enumerate() {
        if g {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            count += 1;
        }
    }
    if count == 0 {
        let x = (w as f64 / 2.0).round_ties_even() as usize;
        let y = (h as f64 / 2.0).round_ties_even() as usize;
        return (x + 1, y + 1);
    }
    let x = (sx / count as f64).round_ties_even() as usize;
    let y = (sy / count as f64).round_ties_even() as usize;
    (x + 1, y + 1)
}

/// Structural similarity of two equally sized blocks. Empty blocks score 0.
pub fn ssim(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let x = p.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let div = (n - 1.0).max(1.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(g) {
        sxx += (a - x) * (a - x);
        syy += (b - y) * (b - y);
        sxy += (a - x) * (b - y);
    }
    let (sxx, syy, sxy) = (sxx / div, syy / div, sxy / div);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Region-aware term: area-weighted SSIM of the four blocks around the
/// split point.
pub fn region_score(pred: &SaliencyMap, gt: &BinaryMask) -> f64 {
    let (w, h) = (gt.width(), gt.height());
    let (x, y) = split_point(gt);
    let (x, y) = (x.min(w), y.min(h));
    let area = (w * h) as f64;
    let blocks = [(0, y, 0, x), (0, y, x, w), (y, h, 0, x), (y, h, x, w)];
    let weights = [
        (x * y) as f64 / area,
        (y * (w - x)) as f64 / area,
        ((h - y) * x) as f64 / area,
    ];
    let weights = [
        weights[0],
        weights[1],
        weights[2],
        1.0 - weights[0] - weights[1] - weights[2],
    ];
    let gv: Vec<f64> = gt
        .values()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let mut score = 0.0;
    for (&(y0, y1, x0, x1), wt) in blocks.iter().zip(weights) {
        let mut p = Vec::with_capacity((y1 - y0) * (x1 - x0));
        let mut g = Vec::with_capacity(p.capacity());
        for row in y0..y1 {
            p.extend_from_slice(&pred.values()[row * w + x0..row * w + x1]);
            g.extend_from_slice(&gv[row * w + x0..row * w + x1]);
        }
        score += wt * ssim(&p, &g);
    }
    score
}
