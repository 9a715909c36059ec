use super::{SuiteResult, Tally};
use crate::dense::DenseBlock;
use crate::dynfilter::{
    adaptive_conv, ddpm_forward, kgu_forward, DdpmConfig, DdpmParams, KernelField, TAPS,
};
use crate::error::Result;
use crate::init::Initializer;
use crate::metrics::{
    e_measure, f_measures, pr_curve, s_measure, weighted_fmeasure, BinaryMask, SaliencyMap,
};
use crate::reference;
use crate::tensor::{avg_pool, conv2d, ConvParams, Shape, Tensor};
use rand::Rng;

const EXACT: f64 = 1e-12;

fn random_conv(
    init: &mut Initializer,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dil: usize,
) -> ConvParams {
    let weight = init.tensor(Shape::new(out_ch, in_ch, k, k), -1.0, 1.0);
    let bias = (0..out_ch).map(|_| init.uniform(-1.0, 1.0)).collect();
    ConvParams::new(weight, bias, stride, pad, dil).expect("well-formed conv")
}

/// Production adaptive convolution against the padded-canvas loop for
/// random `N ≤ 2, C′ ≤ 4, H′, W′ ≤ 8, d ∈ {1, 3, 5}`.
pub fn adaptive_conv_oracle(seed: u64, instances: usize) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    for _ in 0..instances {
        let rng = init.rng();
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=4);
        let (h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let d = [1, 3, 5][rng.gen_range(0..3)];
        let groups = if rng.gen_bool(0.5) { 1 } else { c };
        let f = init.tensor(Shape::new(n, c, h, w), -1.0, 1.0);
        let k = KernelField::new(init.tensor(Shape::new(n, TAPS * groups, h, w), -1.0, 1.0))?;
        let fast = adaptive_conv(&f, &k, d)?;
        tally.record(fast.max_abs_diff(&reference::adaptive_conv(&f, &k, d)));
    }
    Ok(tally.finish("adaptive_conv vs loop", instances, EXACT, true))
}

/// One-hot centre kernels reproduce the input and zero kernels give zero,
/// bit for bit, at every dilation.
pub fn identity_zero_kernels(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let mut instances = 0;
    for d in [1, 3, 5] {
        for (n, c, h, w) in [(1, 1, 1, 1), (2, 3, 5, 7), (1, 4, 8, 8), (1, 16, 11, 9)] {
            let f = init.tensor(Shape::new(n, c, h, w), -1.0, 1.0);
            for groups in [1, c] {
                let mut raw = Tensor::zeros(Shape::new(n, TAPS * groups, h, w));
                let zero = adaptive_conv(&f, &KernelField::new(raw.clone())?, d)?;
                tally.record(zero.data().iter().fold(0.0, |m, v| m.max(v.abs())));
                for g in 0..groups {
                    raw.plane_mut(0, g * TAPS + 4).fill(1.0);
                    for b in 1..n {
                        raw.plane_mut(b, g * TAPS + 4).fill(1.0);
                    }
                }
                let id = adaptive_conv(&f, &KernelField::new(raw)?, d)?;
                tally.record(id.max_abs_diff(&f));
                instances += 2;
            }
        }
    }
    Ok(tally.finish("identity/zero kernels", instances, 0.0, true))
}

pub fn conv2d_oracle(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let instances = 50;
    for _ in 0..instances {
        let rng = init.rng();
        let k: usize = [1, 3, 5][rng.gen_range(0..3)];
        let (stride, pad, dil) = (
            rng.gen_range(1..=2),
            rng.gen_range(0..=2),
            rng.gen_range(1..=3),
        );
        let (ic, oc) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let span = dil * (k - 1) + 1;
        let h = rng.gen_range(span.saturating_sub(2 * pad).max(1)..=span + 6);
        let w = rng.gen_range(span.saturating_sub(2 * pad).max(1)..=span + 6);
        let n = rng.gen_range(1..=2);
        let p = random_conv(&mut init, oc, ic, k, stride, pad, dil);
        let x = init.tensor(Shape::new(n, ic, h, w), -1.0, 1.0);
        tally.record(conv2d(&x, &p)?.max_abs_diff(&reference::conv2d(&x, &p)));
    }
    Ok(tally.finish("conv2d vs loop", instances, EXACT, true))
}

pub fn dilation_oracle(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let instances = 30;
    for _ in 0..instances {
        let rng = init.rng();
        let dil = rng.gen_range(1..=4);
        let pad = rng.gen_range(0..=dil);
        let h = rng.gen_range(2 * dil + 1..=2 * dil + 6);
        let p = random_conv(&mut init, 2, 2, 3, 1, pad, dil);
        let x = init.tensor(Shape::new(1, 2, h, h), -1.0, 1.0);
        tally.record(conv2d(&x, &p)?.max_abs_diff(&reference::conv2d_inflated(&x, &p)));
    }
    Ok(tally.finish("dilated vs inflated kernel", instances, EXACT, true))
}

pub fn pool_oracle(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let instances = 30;
    for _ in 0..instances {
        let rng = init.rng();
        let k: usize = rng.gen_range(1..=5);
        let pad = rng.gen_range(0..k);
        let stride = rng.gen_range(1..=2);
        let h = rng.gen_range(k.saturating_sub(2 * pad).max(1)..=9);
        let x = init.tensor(Shape::new(1, 2, h, h), -1.0, 1.0);
        tally.record(
            avg_pool(&x, k, stride, pad)?.max_abs_diff(&reference::avg_pool(&x, k, stride, pad)),
        );
    }
    Ok(tally.finish("avg_pool vs loop", instances, EXACT, true))
}

pub fn kgu_oracle(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let instances = 5;
    for _ in 0..instances {
        let block = DenseBlock::init(64, 32, 4, 144, &mut init);
        let x = init.tensor(Shape::new(1, 64, 4, 4), -1.0, 1.0);
        let fast = kgu_forward(&x, &block)?;
        tally.record(fast.raw().max_abs_diff(&reference::dense_block(&x, &block)));
    }
    Ok(tally.finish("kgu vs conv oracles", instances, EXACT, true))
}

pub fn ddpm_oracle(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let instances = 3;
    for i in 0..instances {
        let cfg = DdpmConfig::default();
        let p = DdpmParams::init(cfg, &mut init);
        let (n, h, w) = [(1, 4, 4), (2, 5, 3), (1, 7, 6)][i];
        let x = init.tensor(Shape::new(n, 64, h, w), -1.0, 1.0);
        let t = init.tensor(Shape::new(n, 64, h, w), -1.0, 1.0);
        tally.record(ddpm_forward(&x, &t, &p)?.max_abs_diff(&reference::ddpm(&x, &t, &p)));
    }
    Ok(tally.finish("ddpm vs composed oracles", instances, EXACT, true))
}

/// A random prediction/ground-truth pair of the given size. Ground truths
/// are unions of rectangles (occasionally empty or full); predictions are
/// continuous noise, coarse levels, noisy copies of the mask, or all zero.
pub fn random_pair(init: &mut Initializer, w: usize, h: usize) -> (SaliencyMap, SaliencyMap) {
    let rng = init.rng();
    let mut gt = vec![0.0; w * h];
    match rng.gen_range(0..12) {
        0 => {}
        1 => gt.fill(1.0),
        _ => {
            for _ in 0..rng.gen_range(1..=3) {
                let (y0, x0) = (rng.gen_range(0..h), rng.gen_range(0..w));
                let (y1, x1) = (rng.gen_range(y0..h) + 1, rng.gen_range(x0..w) + 1);
                for y in y0..y1 {
                    gt[y * w + x0..y * w + x1].fill(1.0);
                }
            }
        }
    }
    let pred: Vec<f64> = match rng.gen_range(0..8) {
        0 => vec![0.0; w * h],
        1 | 2 => (0..w * h)
            .map(|_| f64::from(rng.gen_range(0..5u8)) / 4.0)
            .collect(),
        3 | 4 => gt
            .iter()
            .map(|&g| (0.7 * g + rng.gen_range(0.0..0.3f64)).clamp(0.0, 1.0))
            .collect(),
        _ => (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect(),
    };
    (
        SaliencyMap::new(w, h, pred).expect("values in [0, 1]"),
        SaliencyMap::new(w, h, gt).expect("values in [0, 1]"),
    )
}

/// PR curve and `f_max` against independent recounts at each of the 256
/// thresholds, on `images` random 16×16 pairs.
pub fn sweep_oracle(seed: u64, images: usize) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    for _ in 0..images {
        let (p, g) = random_pair(&mut init, 16, 16);
        let mask = g.binarize();
        let pr = pr_curve(&p, &mask)?;
        for (t, point) in pr.iter().enumerate() {
            let (prec, rec) = reference::pr_at(&p, &mask, t as u8);
            tally.record(
                (point.precision - prec)
                    .abs()
                    .max((point.recall - rec).abs()),
            );
        }
        tally.record((f_measures(&p, &mask)?.f_max - reference::f_max(&p, &mask)).abs());
    }
    Ok(tally.finish("pr curve / f_max vs recount", images, EXACT, true))
}

/// S, E and weighted F against their transliterations on random pairs,
/// plus the single-foreground-pixel case with one false positive.
pub fn metric_oracles(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut init = Initializer::new(seed);
    let mut pairs = Vec::new();
    for _ in 0..60 {
        let (w, h) = (init.rng().gen_range(1..=20), init.rng().gen_range(1..=20));
        pairs.push(random_pair(&mut init, w, h));
    }
    let mut single = vec![false; 25];
    single[12] = true;
    let g = BinaryMask::new(5, 5, single)?.to_map();
    let mut p = g.values().to_vec();
    p[13] = 1.0;
    pairs.push((SaliencyMap::new(5, 5, p)?, g));

    type Metric = fn(&SaliencyMap, &BinaryMask) -> Result<f64>;
    type Oracle = fn(&SaliencyMap, &BinaryMask) -> f64;
    let suites: [(&str, Metric, Oracle); 3] = [
        (
            "s_measure vs transliteration",
            s_measure,
            reference::s_measure,
        ),
        (
            "e_measure vs transliteration",
            e_measure,
            reference::e_measure,
        ),
        (
            "wfm vs transliteration",
            weighted_fmeasure,
            reference::weighted_fmeasure,
        ),
    ];
    let mut out = Vec::new();
    for (name, fast, slow) in suites {
        let mut tally = Tally::new();
        for (p, g) in &pairs {
            let mask = g.binarize();
            tally.record((fast(p, &mask)? - slow(p, &mask)).abs());
        }
        out.push(tally.finish(name, pairs.len(), EXACT, true));
    }
    Ok(out)
}

/// Every oracle suite in a fixed order.
pub fn oracle_suites(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        adaptive_conv_oracle(seed, 200)?,
        identity_zero_kernels(seed.wrapping_add(1))?,
        conv2d_oracle(seed.wrapping_add(2))?,
        dilation_oracle(seed.wrapping_add(3))?,
        pool_oracle(seed.wrapping_add(4))?,
        kgu_oracle(seed.wrapping_add(5))?,
        ddpm_oracle(seed.wrapping_add(6))?,
        sweep_oracle(seed.wrapping_add(7), 50)?,
    ];
    out.extend(metric_oracles(seed.wrapping_add(8))?);
    Ok(out)
}
