use super::pgm::read_pgm_file;
use crate::error::{Error, Result};
use crate::metrics::{score_image, ImageScores, MetricReport, SaliencyMap};
use crate::tensor::{resize_bilinear, Shape, Tensor};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A prediction and its ground truth sharing a file stem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairEntry {
    pub name: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pairing {
    /// Sorted by name.
    pub entries: Vec<PairEntry>,
    /// Prediction stems with no ground truth.
    pub unmatched: Vec<String>,
}

fn pgm_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_owned(), path);
        }
    }
    Ok(out)
}

/// Matches `*.pgm` files of the two directories by exact stem.
pub fn pair_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<Pairing> {
    let preds = pgm_stems(pred_dir)?;
    let mut gts = pgm_stems(gt_dir)?;
    let mut entries = Vec::new();
    let mut unmatched = Vec::new();
    for (name, pred) in preds {
        match gts.remove(&name) {
            Some(gt) => entries.push(PairEntry { name, pred, gt }),
            None => unmatched.push(name),
        }
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "no prediction in {} matches a ground truth in {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    Ok(Pairing { entries, unmatched })
}

/// Bilinear resize of a map, clamped back into `[0, 1]`.
pub fn resize_map(map: &SaliencyMap, width: usize, height: usize) -> Result<SaliencyMap> {
    if (map.width(), map.height()) == (width, height) {
        return Ok(map.clone());
    }
    let t = Tensor::from_vec(
        Shape::new(1, 1, map.height(), map.width()),
        map.values().to_vec(),
    )?;
    let r = resize_bilinear(&t, height, width)?;
    SaliencyMap::new(
        width,
        height,
        r.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
}

/// Reads one pair, resizing the prediction to the ground-truth size.
pub fn load_pair(entry: &PairEntry) -> Result<(SaliencyMap, SaliencyMap)> {
    let gt = read_pgm_file(&entry.gt)?.to_map();
    let pred = read_pgm_file(&entry.pred)?.to_map();
    let pred = resize_map(&pred, gt.width(), gt.height())?;
    Ok((pred, gt))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    /// Scored images in name order.
    pub images: Vec<(String, ImageScores)>,
    /// Entries that could not be scored, with the reason.
    pub failures: Vec<(String, String)>,
}

/// Scores every pair in parallel and folds the results in name order.
/// Failing entries are skipped; an error is returned only when none
/// succeeds.
pub fn evaluate(pairing: &Pairing) -> Result<Evaluation> {
    let results: Vec<Result<ImageScores>> = pairing
        .entries
        .par_iter()
        .map(|e| load_pair(e).and_then(|(p, g)| score_image(&p, &g)))
        .collect();
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for (entry, r) in pairing.entries.iter().zip(results) {
        match r {
            Ok(s) => images.push((entry.name.clone(), s)),
            Err(e) => failures.push((entry.name.clone(), e.to_string())),
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "all {} entries failed; first: {}: {}",
            failures.len(),
            failures[0].0,
            failures[0].1
        )));
    }
    let scored: Vec<ImageScores> = images.iter().map(|(_, s)| s.clone()).collect();
    Ok(Evaluation {
        report: MetricReport::from_images(&scored)?,
        images,
        failures,
    })
}
