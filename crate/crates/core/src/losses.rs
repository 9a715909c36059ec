//! Hybrid enhanced loss: pixel-level binary cross-entropy, an edge loss on
//! the band where the ground truth differs from its 5×5 local mean, and
//! region losses normalized separately over foreground and background.
//!
//! Every loss returns its value together with the gradient with respect to
//! the prediction. Predictions and ground truths are `(N, C, H, W)` tensors
//! of identical shape; per-sample sums run over `C·H·W`.

use crate::error::{Error, Result};
use crate::tensor::{avg_pool, ensure_same_shape, Tensor};

/// Threshold above which `|G − pool(G)|` marks an edge pixel.
pub const EDGE_EPS: f64 = 1e-6;

/// Side of the pooling window that defines the edge band.
pub const EDGE_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// `∂value/∂p`, same shape as the prediction.
    pub grad: Tensor,
}

/// Binary `(N, C, H, W)` mask of edge-band pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMask(Tensor);

impl EdgeMask {
    pub fn mask(&self) -> &Tensor {
        &self.0
    }

    /// Number of edge pixels in sample `n`.
    pub fn count(&self, n: usize) -> f64 {
        self.0.sample(n).iter().sum()
    }
}

fn check_gt(op: &'static str, g: &Tensor) -> Result<()> {
    match g.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::Domain {
            op,
            index,
            value: g.data()[index],
            domain: "[0, 1]",
        }),
        None => Ok(()),
    }
}

fn check_pair(op: &'static str, p: &Tensor, g: &Tensor) -> Result<()> {
    ensure_same_shape(op, p.shape(), g.shape())?;
    check_gt(op, g)?;
    match p.data().iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        Some(index) => Err(Error::Domain {
            op,
            index,
            value: p.data()[index],
            domain: "(0, 1)",
        }),
        None => Ok(()),
    }
}

/// `−mean[g·ln p + (1−g)·ln(1−p)]` over every element.
pub fn bce_loss(p: &Tensor, g: &Tensor) -> Result<LossValue> {
    check_pair("bce_loss", p, g)?;
    let m = p.shape().len() as f64;
    let mut acc = 0.0;
    let mut grad = Tensor::zeros(p.shape());
    for ((gr, &pv), &gv) in grad.data_mut().iter_mut().zip(p.data()).zip(g.data()) {
        acc += gv * pv.ln() + (1.0 - gv) * (-pv).ln_1p();
        *gr = -(gv / pv - (1.0 - gv) / (1.0 - pv)) / m;
    }
    Ok(LossValue {
        value: -acc / m,
        grad,
    })
}

/// Pixels where the ground truth differs from its border-excluding 5×5
/// average by more than [`EDGE_EPS`].
pub fn edge_mask(g: &Tensor) -> Result<EdgeMask> {
    check_gt("edge_mask", g)?;
    let pooled = avg_pool(g, EDGE_WINDOW, 1, EDGE_WINDOW / 2)?;
    let mut mask = Tensor::zeros(g.shape());
    for ((m, &gv), &pv) in mask.data_mut().iter_mut().zip(g.data()).zip(pooled.data()) {
        if (gv - pv).abs() > EDGE_EPS {
            *m = 1.0;
        }
    }
    Ok(EdgeMask(mask))
}

/// Mean absolute error over the edge band of each sample, averaged over
/// the batch. A sample without edge pixels contributes zero.
pub fn eel_loss(p: &Tensor, g: &Tensor) -> Result<LossValue> {
    check_pair("eel_loss", p, g)?;
    let e = edge_mask(g)?;
    let batch = p.shape().n;
    let mut grad = Tensor::zeros(p.shape());
    let mut total = 0.0;
    for n in 0..batch {
        let count = e.count(n);
        if count == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        let gs = grad.sample_mut(n);
        for (((gr, &ev), &pv), &gv) in gs
            .iter_mut()
            .zip(e.mask().sample(n))
            .zip(p.sample(n))
            .zip(g.sample(n))
        {
            if ev == 0.0 {
                continue;
            }
            let diff = pv - gv;
            acc += diff.abs();
            // Subgradient 0 at p = g.
            *gr = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            } / (count * batch as f64);
        }
        total += acc / count;
    }
    Ok(LossValue {
        value: total / batch as f64,
        grad,
    })
}

/// Foreground loss `Σg(1−p)/Σg` plus background loss `Σ(1−g)p/Σ(1−g)`,
/// per sample, averaged over the batch. An empty class contributes zero.
pub fn rel_loss(p: &Tensor, g: &Tensor) -> Result<LossValue> {
    check_pair("rel_loss", p, g)?;
    let batch = p.shape().n;
    let nb = batch as f64;
    let mut grad = Tensor::zeros(p.shape());
    let mut total = 0.0;
    for n in 0..batch {
        let gs = g.sample(n);
        let ps = p.sample(n);
        let fg: f64 = gs.iter().sum();
        let bg: f64 = gs.iter().map(|v| 1.0 - v).sum();
        if fg > 0.0 {
            let num: f64 = gs.iter().zip(ps).map(|(gv, pv)| gv - gv * pv).sum();
            total += num / fg;
        }
        if bg > 0.0 {
            let num: f64 = gs.iter().zip(ps).map(|(gv, pv)| (1.0 - gv) * pv).sum();
            total += num / bg;
        }
        for (gr, &gv) in grad.sample_mut(n).iter_mut().zip(gs) {
            let mut d = 0.0;
            if fg > 0.0 {
                d -= gv / fg;
            }
            if bg > 0.0 {
                d += (1.0 - gv) / bg;
            }
            *gr = d / nb;
        }
    }
    Ok(LossValue {
        value: total / nb,
        grad,
    })
}

/// `bce + eel + rel`, values and gradients summed term by term.
pub fn hel_loss(p: &Tensor, g: &Tensor) -> Result<LossValue> {
    let bce = bce_loss(p, g)?;
    let eel = eel_loss(p, g)?;
    let rel = rel_loss(p, g)?;
    let mut grad = bce.grad;
    grad.add_assign(&eel.grad)?;
    grad.add_assign(&rel.grad)?;
    Ok(LossValue {
        value: bce.value + eel.value + rel.value,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn half_plane(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(
            Shape::new(1, 1, h, w),
            |_, _, _, x| if x < w / 2 { 1.0 } else { 0.0 },
        )
    }

    #[test]
    fn bce_closed_forms() {
        let s = Shape::new(1, 1, 3, 3);
        let l = bce_loss(&Tensor::full(s, 0.999), &Tensor::full(s, 1.0)).unwrap();
        assert!((l.value - (-(0.999f64).ln())).abs() < 1e-15);
        assert!((l.value - 1.0005e-3).abs() < 1e-7);
        let g = half_plane(4, 4);
        let l = bce_loss(&Tensor::full(g.shape(), 0.5), &g).unwrap();
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_closed_interval_predictions() {
        let s = Shape::new(1, 1, 1, 2);
        let p = Tensor::from_vec(s, vec![0.5, 1.0]).unwrap();
        let err = bce_loss(&p, &Tensor::zeros(s)).unwrap_err();
        assert!(matches!(err, Error::Domain { index: 1, .. }));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Tensor::full(Shape::new(1, 1, 2, 2), 0.5);
        let g = Tensor::zeros(Shape::new(1, 1, 2, 3));
        assert!(hel_loss(&p, &g).is_err());
    }

    #[test]
    fn constant_gt_has_empty_edge_mask() {
        for v in [0.0, 1.0, 0.3] {
            let e = edge_mask(&Tensor::full(Shape::new(2, 1, 6, 7), v)).unwrap();
            assert_eq!(e.mask().sum(), 0.0);
        }
    }

    #[test]
    fn half_plane_edge_band_is_four_columns() {
        let e = edge_mask(&half_plane(8, 8)).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = if (2..6).contains(&x) { 1.0 } else { 0.0 };
                assert_eq!(e.mask()[[0, 0, y, x]], expected, "({y},{x})");
            }
        }
        assert_eq!(e.count(0), 32.0);
    }

    #[test]
    fn single_pixel_edge_reach() {
        let mut g = Tensor::zeros(Shape::new(1, 1, 7, 7));
        g[[0, 0, 3, 3]] = 1.0;
        let e = edge_mask(&g).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let inside = (1..=5).contains(&y) && (1..=5).contains(&x);
                assert_eq!(e.mask()[[0, 0, y, x]], if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn eel_single_flip_on_band() {
        let g = half_plane(8, 8);
        let mut p = g.map(|v| v.clamp(1e-12, 1.0 - 1e-12));
        // Flip one band pixel fully; the clamped rest contributes ~1e-12 each.
        p[[0, 0, 4, 3]] = 1e-300;
        let l = eel_loss(&p, &g).unwrap();
        assert!((l.value - 1.0 / 32.0).abs() < 1e-10);
    }

    #[test]
    fn eel_constant_gt_is_zero() {
        let g = Tensor::zeros(Shape::new(1, 1, 5, 5));
        let p = Tensor::full(g.shape(), 0.7);
        let l = eel_loss(&p, &g).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rel_half_probability() {
        let g = half_plane(4, 6);
        let l = rel_loss(&Tensor::full(g.shape(), 0.5), &g).unwrap();
        assert!((l.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rel_gradient_is_constant_per_region() {
        let g = half_plane(4, 6);
        let p = Tensor::from_fn(g.shape(), |_, _, y, x| 0.1 + 0.03 * (y * 6 + x) as f64);
        let l = rel_loss(&p, &g).unwrap();
        for (gr, gv) in l.grad.data().iter().zip(g.data()) {
            let expected = if *gv == 1.0 { -1.0 / 12.0 } else { 1.0 / 12.0 };
            assert!((gr - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rel_degenerate_classes_are_finite() {
        for v in [0.0, 1.0] {
            let g = Tensor::full(Shape::new(1, 1, 3, 3), v);
            let l = rel_loss(&Tensor::full(g.shape(), 0.4), &g).unwrap();
            assert!(l.value.is_finite() && l.grad.is_finite());
        }
    }

    #[test]
    fn hel_is_sum_of_terms() {
        let g = half_plane(6, 6);
        let p = Tensor::from_fn(g.shape(), |_, _, y, x| 0.05 + 0.025 * (y * 6 + x) as f64);
        let h = hel_loss(&p, &g).unwrap();
        let (a, b, c) = (
            bce_loss(&p, &g).unwrap().value,
            eel_loss(&p, &g).unwrap().value,
            rel_loss(&p, &g).unwrap().value,
        );
        assert_eq!(h.value.to_bits(), (a + b + c).to_bits());
    }
}
