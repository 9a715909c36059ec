use super::fmeasure::adaptive_binarize;
use super::map::{check_dims, BinaryMask, SaliencyMap};
use crate::error::Result;

/// Enhanced alignment of the adaptively binarized prediction with the mask.
pub fn e_measure(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check_dims("e_measure", pred, gt.width(), gt.height())?;
    e_measure_binarized(&adaptive_binarize(pred), gt)
}

/// Mean of `(ξ+1)²/4` where `ξ = 2·φ_B·φ_G/(φ_B²+φ_G²)` on mean-removed
/// maps, 0 where both terms vanish. For a constant mask, `ξ` is `1` where
/// `B` agrees with it and `−1` elsewhere.
pub fn e_measure_binarized(b: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    crate::error::ensure_dim("e_measure", "width", gt.width(), b.width())?;
    crate::error::ensure_dim("e_measure", "height", gt.height(), b.height())?;
    let n = gt.values().len() as f64;
    let fg = gt.count();
    let total: f64 = if fg == 0 || fg == gt.values().len() {
        b.values()
            .iter()
            .zip(gt.values())
            .map(|(&bv, &gv)| if bv == gv { 1.0 } else { 0.0 })
            .sum()
    } else {
        let mb = b.count() as f64 / n;
        let mg = fg as f64 / n;
        b.values()
            .iter()
            .zip(gt.values())
            .map(|(&bv, &gv)| {
                let pb = f64::from(u8::from(bv)) - mb;
                let pg = f64::from(u8::from(gv)) - mg;
                let den = pb * pb + pg * pg;
                let xi = if den == 0.0 { 0.0 } else { 2.0 * pb * pg / den };
                (xi + 1.0) * (xi + 1.0) / 4.0
            })
            .sum()
    };
    Ok(total / n)
}
