use super::map::{check_dims, BinaryMask, SaliencyMap};
use crate::error::Result;

/// Side of the error-dependency window.
pub const WINDOW: usize = 7;

/// Standard deviation of the error-dependency Gaussian.
pub const SIGMA: f64 = 5.0;

/// Background distance at which the importance weight reaches 1.5.
pub const DECAY_DISTANCE: f64 = 5.0;

const EPS: f64 = f64::EPSILON;

/// Nearest-foreground lookup for every pixel of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    /// Euclidean distance to the nearest foreground pixel.
    pub distance: Vec<f64>,
    /// Row-major index of that pixel.
    pub nearest: Vec<usize>,
}

/// Exact Euclidean distance transform to the foreground of `mask`, which
/// must contain at least one foreground pixel.
///
/// Ties between equally distant foreground pixels go to the smallest
/// column, then the smallest row.
pub fn distance_field(mask: &BinaryMask) -> DistanceField {
    let (w, h) = (mask.width(), mask.height());
    let v = mask.values();
    // Nearest foreground row in the same column, ties to the upper one.
    let mut col_row = vec![usize::MAX; w * h];
    for x in 0..w {
        let mut last = usize::MAX;
        for y in 0..h {
            if v[y * w + x] {
                last = y;
            }
            col_row[y * w + x] = last;
        }
        let mut next = usize::MAX;
        for y in (0..h).rev() {
            if v[y * w + x] {
                next = y;
            }
            let up = col_row[y * w + x];
            if next != usize::MAX && (up == usize::MAX || next - y < y - up) {
                col_row[y * w + x] = next;
            }
        }
    }
    let mut distance = vec![0.0; w * h];
    let mut nearest = vec![0; w * h];
    let mut col_d2 = vec![u64::MAX; w];
    for y in 0..h {
        for (x, d) in col_d2.iter_mut().enumerate() {
            let r = col_row[y * w + x];
            *d = if r == usize::MAX {
                u64::MAX
            } else {
                let dy = r.abs_diff(y) as u64;
                dy * dy
            };
        }
        for x in 0..w {
            let mut best = u64::MAX;
            let mut best_x = 0;
            for (xx, &d) in col_d2.iter().enumerate() {
                if d == u64::MAX {
                    continue;
                }
                let dx = xx.abs_diff(x) as u64;
                let total = d + dx * dx;
                if total < best {
                    best = total;
                    best_x = xx;
                }
            }
            distance[y * w + x] = (best as f64).sqrt();
            nearest[y * w + x] = col_row[y * w + best_x] * w + best_x;
        }
    }
    DistanceField { distance, nearest }
}

/// Normalized `WINDOW × WINDOW` Gaussian, row-major.
pub fn gaussian_kernel() -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .flat_map(|y| (-r..=r).map(move |x| (y, x)))
        .map(|(y, x)| (-((x * x + y * y) as f64) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let max = k.iter().copied().fold(0.0, f64::max);
    for v in k.iter_mut() {
        if *v < f64::EPSILON * max {
            *v = 0.0;
        }
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn smooth(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                let yy = y + ky;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for kx in -r..=r {
                    let xx = x + kx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    acc += kernel[((ky + r) * WINDOW as isize + kx + r) as usize]
                        * src[(yy * w as isize + xx) as usize];
                }
            }
            out[(y * w as isize + x) as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure with `β² = 1`. Background pixels inherit the error of
/// their nearest foreground pixel before Gaussian smoothing (zero padded),
/// foreground errors are capped by the smoothed value, and background
/// errors are scaled by `2 − exp(ln(0.5)/5 · dist)`. An empty mask scores 0.
pub fn weighted_fmeasure(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims("weighted_fmeasure", pred, gt.width(), gt.height())?;
    if gt.count() == 0 {
        return Ok(0.0);
    }
    let (w, h) = (gt.width(), gt.height());
    let g = gt.values();
    let err: Vec<f64> = pred
        .values()
        .iter()
        .zip(g)
        .map(|(&p, &b)| (p - if b { 1.0 } else { 0.0 }).abs())
        .collect();
    let field = distance_field(gt);
    let spread: Vec<f64> = (0..w * h)
        .map(|i| if g[i] { err[i] } else { err[field.nearest[i]] })
        .collect();
    let smoothed = smooth(&spread, w, h, &gaussian_kernel());
    let decay = 0.5f64.ln() / DECAY_DISTANCE;
    let (mut fg_err, mut bg_err) = (0.0, 0.0);
    for i in 0..w * h {
        if g[i] {
            fg_err += if smoothed[i] < err[i] {
                smoothed[i]
            } else {
                err[i]
            };
        } else {
            bg_err += err[i] * (2.0 - (decay * field.distance[i]).exp());
        }
    }
    let fg = gt.count() as f64;
    let tp = fg - fg_err;
    let recall = 1.0 - fg_err / fg;
    let precision = tp / (tp + bg_err + EPS);
    Ok(2.0 * recall * precision / (recall + precision + EPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, lo: usize, hi: usize) -> SaliencyMap {
        SaliencyMap::from_fn(n, n, |y, x| {
            if (lo..hi).contains(&y) && (lo..hi).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn distance_field_of_single_pixel() {
        let m = square(5, 2, 3).binarize();
        let f = distance_field(&m);
        assert_eq!(f.distance[0], 8f64.sqrt());
        assert!(f.nearest.iter().all(|&i| i == 12));
    }

    #[test]
    fn ties_prefer_smaller_column_then_row() {
        // Foreground at (0,2), (2,0), (2,4), (4,2); centre is equidistant.
        let mut v = vec![false; 25];
        for i in [2, 10, 14, 22] {
            v[i] = true;
        }
        let f = distance_field(&BinaryMask::new(5, 5, v).unwrap());
        assert_eq!(f.nearest[12], 10);
        assert_eq!(f.distance[12], 2.0);
    }

    #[test]
    fn endpoints() {
        let g = square(16, 5, 11);
        let gb = g.binarize();
        assert!((weighted_fmeasure(&g, &gb).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(weighted_fmeasure(&g.inverted(), &gb).unwrap(), 0.0);
        let empty = SaliencyMap::new(4, 4, vec![0.0; 16]).unwrap();
        assert_eq!(weighted_fmeasure(&empty, &empty.binarize()).unwrap(), 0.0);
    }
}
