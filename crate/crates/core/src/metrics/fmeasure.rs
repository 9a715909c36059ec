use super::map::{check_dims, BinaryMask, SaliencyMap};
use crate::error::Result;

/// Weight of precision in the F-measure.
pub const BETA_SQ: f64 = 0.3;

/// Number of 8-bit thresholds in a sweep.
pub const THRESHOLDS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: u8,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

/// `num / den` with `0/0 := 0`.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Weighted harmonic mean of precision and recall, 0 if both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    let den = BETA_SQ * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + BETA_SQ) * precision * recall / den
    }
}

/// Confusion counts of `round(255·p) ≥ t` against the mask for every
/// threshold `t ∈ 0..=255`, from cumulative histograms.
pub fn confusion_sweep(pred: &SaliencyMap, gt: &BinaryMask) -> Result<Vec<Confusion>> {
    check_dims("confusion_sweep", pred, gt.width(), gt.height())?;
    let mut fg = [0usize; THRESHOLDS];
    let mut bg = [0usize; THRESHOLDS];
    for (q, &g) in pred.quantize().into_iter().zip(gt.values()) {
        if g {
            fg[q as usize] += 1;
        } else {
            bg[q as usize] += 1;
        }
    }
    let positives = gt.count();
    let mut out = vec![Confusion::default(); THRESHOLDS];
    let (mut tp, mut fp) = (0, 0);
    for t in (0..THRESHOLDS).rev() {
        tp += fg[t];
        fp += bg[t];
        out[t] = Confusion {
            tp,
            fp,
            fn_: positives - tp,
        };
    }
    Ok(out)
}

pub fn pr_curve(pred: &SaliencyMap, gt: &BinaryMask) -> Result<Vec<PrPoint>> {
    Ok(confusion_sweep(pred, gt)?
        .iter()
        .enumerate()
        .map(|(t, c)| PrPoint {
            threshold: t as u8,
            precision: c.precision(),
            recall: c.recall(),
        })
        .collect())
}

/// Threshold `min(2·mean(P), 1)`.
pub fn adaptive_threshold(pred: &SaliencyMap) -> f64 {
    (2.0 * pred.mean()).min(1.0)
}

/// `P ≥ min(2·mean(P), 1)`. An all-zero map has threshold 0 and binarizes
/// to all background rather than all foreground.
pub fn adaptive_binarize(pred: &SaliencyMap) -> BinaryMask {
    let t = adaptive_threshold(pred);
    let values = pred.values().iter().map(|&v| v >= t && v > 0.0).collect();
    BinaryMask::new(pred.width(), pred.height(), values).expect("same dims")
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Per-image F-measure results.
#[derive(Clone, Debug, PartialEq)]
pub struct FMeasures {
    pub f_max: f64,
    pub f_ada: f64,
    /// `F(t)` for `t ∈ 0..=255`.
    pub curve: Vec<f64>,
}

pub fn f_measures(pred: &SaliencyMap, gt: &BinaryMask) -> Result<FMeasures> {
    let curve: Vec<f64> = pr_curve(pred, gt)?
        .iter()
        .map(|pt| f_measure(pt.precision, pt.recall))
        .collect();
    let f_max = curve.iter().copied().fold(0.0, f64::max);
    let ada = confusion(&adaptive_binarize(pred), gt);
    Ok(FMeasures {
        f_max,
        f_ada: f_measure(ada.precision(), ada.recall()),
        curve,
    })
}
