//! Saliency evaluation: threshold-swept precision/recall and F-measures,
//! weighted F-measure, MAE, structure and enhanced-alignment measures, and
//! size-weighted aggregation across datasets.

mod enhanced;
mod fmeasure;
mod map;
mod structure;
mod weighted;

pub use enhanced::{e_measure, e_measure_binarized};
pub use fmeasure::{
    adaptive_binarize, adaptive_threshold, confusion, confusion_sweep, f_measure, f_measures,
    pr_curve, Confusion, FMeasures, PrPoint, BETA_SQ, THRESHOLDS,
};
pub use map::{BinaryMask, SaliencyMap, GT_THRESHOLD};
pub use structure::{object_score, region_score, s_measure, split_point, ssim, ALPHA};
pub use weighted::{distance_field, gaussian_kernel, weighted_fmeasure, DistanceField};

use crate::error::{Error, Result};
use map::check_dims;
use std::fmt;
use std::str::FromStr;

/// The six reported measures, in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    FMax,
    FAda,
    Wfm,
    Mae,
    SMeasure,
    EMeasure,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::FMax,
        Metric::FAda,
        Metric::Wfm,
        Metric::Mae,
        Metric::SMeasure,
        Metric::EMeasure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FMax => "f_max",
            Metric::FAda => "f_ada",
            Metric::Wfm => "wfm",
            Metric::Mae => "mae",
            Metric::SMeasure => "s_measure",
            Metric::EMeasure => "e_measure",
        }
    }

    /// Whether lower values are better.
    pub fn lower_is_better(self) -> bool {
        self == Metric::Mae
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::contract("Metric::from_str", format!("unknown metric `{s}`")))
    }
}

/// One value per [`Metric`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Scores {
    pub f_max: f64,
    pub f_ada: f64,
    pub wfm: f64,
    pub mae: f64,
    pub s_measure: f64,
    pub e_measure: f64,
}

impl Scores {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::FMax => self.f_max,
            Metric::FAda => self.f_ada,
            Metric::Wfm => self.wfm,
            Metric::Mae => self.mae,
            Metric::SMeasure => self.s_measure,
            Metric::EMeasure => self.e_measure,
        }
    }

    pub fn get_mut(&mut self, m: Metric) -> &mut f64 {
        match m {
            Metric::FMax => &mut self.f_max,
            Metric::FAda => &mut self.f_ada,
            Metric::Wfm => &mut self.wfm,
            Metric::Mae => &mut self.mae,
            Metric::SMeasure => &mut self.s_measure,
            Metric::EMeasure => &mut self.e_measure,
        }
    }
}

pub fn mae(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_dims("mae", pred, gt.width(), gt.height())?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Every measure for one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageScores {
    /// `f_max` here is the maximum of this image's own F curve.
    pub scores: Scores,
    pub pr: Vec<PrPoint>,
    pub fm_curve: Vec<f64>,
}

/// Scores `pred` against `gt`; the mask is `gt ≥ 0.5` and MAE uses the
/// continuous ground truth.
pub fn score_image(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<ImageScores> {
    check_dims("score_image", pred, gt.width(), gt.height())?;
    let mask = gt.binarize();
    let pr = pr_curve(pred, &mask)?;
    let f = f_measures(pred, &mask)?;
    let scores = Scores {
        f_max: f.f_max,
        f_ada: f.f_ada,
        wfm: weighted_fmeasure(pred, &mask)?,
        mae: mae(pred, gt)?,
        s_measure: s_measure(pred, &mask)?,
        e_measure: e_measure(pred, &mask)?,
    };
    Ok(ImageScores {
        scores,
        pr,
        fm_curve: f.curve,
    })
}

/// Dataset-level results. Curves are empty for reports that were loaded
/// without them.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub scores: Scores,
    pub pr: Vec<PrPoint>,
    pub fm_curve: Vec<f64>,
    pub n_images: usize,
}

impl MetricReport {
    /// Dataset means in slice order; `f_max` is the maximum of the mean F
    /// curve and the PR curve is the per-threshold mean.
    pub fn from_images(images: &[ImageScores]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::contract("MetricReport::from_images", "no images"));
        }
        let n = images.len() as f64;
        let mut fm_curve = vec![0.0; THRESHOLDS];
        let mut precision = vec![0.0; THRESHOLDS];
        let mut recall = vec![0.0; THRESHOLDS];
        let mut scores = Scores::default();
        for img in images {
            for t in 0..THRESHOLDS {
                fm_curve[t] += img.fm_curve[t];
                precision[t] += img.pr[t].precision;
                recall[t] += img.pr[t].recall;
            }
            for m in Metric::ALL {
                *scores.get_mut(m) += img.scores.get(m);
            }
        }
        for m in Metric::ALL {
            *scores.get_mut(m) /= n;
        }
        fm_curve.iter_mut().for_each(|v| *v /= n);
        scores.f_max = fm_curve.iter().copied().fold(0.0, f64::max);
        let pr = (0..THRESHOLDS)
            .map(|t| PrPoint {
                threshold: t as u8,
                precision: precision[t] / n,
                recall: recall[t] / n,
            })
            .collect();
        Ok(MetricReport {
            scores,
            pr,
            fm_curve,
            n_images: images.len(),
        })
    }
}

/// Size-weighted mean `Σ (n_k/Σn)·v_k` of every scalar. Curves are weighted
/// the same way when every report carries them and are left empty
/// otherwise.
pub fn ave_metric(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::contract("ave_metric", "no reports"));
    }
    if let Some(i) = reports.iter().position(|r| r.n_images == 0) {
        return Err(Error::contract(
            "ave_metric",
            format!("report {i} has n_images = 0"),
        ));
    }
    let total: usize = reports.iter().map(|r| r.n_images).sum();
    let weight = |r: &MetricReport| r.n_images as f64 / total as f64;
    let mut scores = Scores::default();
    for r in reports {
        for m in Metric::ALL {
            *scores.get_mut(m) += weight(r) * r.scores.get(m);
        }
    }
    let with_curves = reports
        .iter()
        .all(|r| r.fm_curve.len() == THRESHOLDS && r.pr.len() == THRESHOLDS);
    let (pr, fm_curve) = if with_curves {
        let mut fm = vec![0.0; THRESHOLDS];
        let mut pr: Vec<PrPoint> = (0..THRESHOLDS)
            .map(|t| PrPoint {
                threshold: t as u8,
                precision: 0.0,
                recall: 0.0,
            })
            .collect();
        for r in reports {
            let wt = weight(r);
            for t in 0..THRESHOLDS {
                fm[t] += wt * r.fm_curve[t];
                pr[t].precision += wt * r.pr[t].precision;
                pr[t].recall += wt * r.pr[t].recall;
            }
        }
        (pr, fm)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(MetricReport {
        scores,
        pr,
        fm_curve,
        n_images: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: usize, mae: f64) -> MetricReport {
        MetricReport {
            scores: Scores {
                mae,
                ..Scores::default()
            },
            pr: Vec::new(),
            fm_curve: Vec::new(),
            n_images: n,
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("fmax".parse::<Metric>().is_err());
    }

    #[test]
    fn mae_constant_case() {
        let p = SaliencyMap::new(2, 2, vec![0.25; 4]).unwrap();
        let g = SaliencyMap::new(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(mae(&p, &g).unwrap(), 0.25);
        assert_eq!(mae(&g, &p).unwrap(), 0.25);
    }

    #[test]
    fn weighted_mean_of_two_reports() {
        let r = ave_metric(&[report(100, 0.04), report(300, 0.08)]).unwrap();
        assert!((r.scores.mae - 0.07).abs() < 1e-15);
        assert_eq!(r.n_images, 400);
        assert!(ave_metric(&[]).is_err());
        assert!(ave_metric(&[report(0, 0.1)]).is_err());
    }

    #[test]
    fn perfect_prediction_fixed_point() {
        let g = SaliencyMap::from_fn(16, 16, |y, x| {
            if (4..10).contains(&y) && (5..12).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let s = score_image(&g, &g).unwrap().scores;
        for m in Metric::ALL {
            let expected = if m == Metric::Mae { 0.0 } else { 1.0 };
            assert!((s.get(m) - expected).abs() < 1e-9, "{m}: {}", s.get(m));
        }
    }
}
