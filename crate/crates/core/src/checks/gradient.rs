use super::{SuiteResult, Tally};
use crate::dynfilter::{
    adaptive_conv, adaptive_conv_backward, ddpm_backward, ddpm_forward, ddpm_forward_cached,
    DdpmConfig, DdpmParams, KernelField, TAPS,
};
use crate::error::Result;
use crate::init::Initializer;
use crate::losses::{bce_loss, eel_loss, hel_loss, rel_loss, LossValue};
use crate::params::ParamSet;
use crate::tensor::{Shape, Tensor};
use rand::seq::index::sample;
use rand::Rng;

/// Central-difference step.
pub const STEP: f64 = 1e-5;

/// Magnitude below which errors are measured in absolute terms.
pub const REL_FLOOR: f64 = 1e-5;

const GRAD_TOL: f64 = 1e-4;
const SMOOTH_TOL: f64 = 1e-6;
const INSTANCES: usize = 20;

/// Instances with a ReLU pre-activation closer to zero than this are
/// redrawn, so that no central difference straddles a kink.
pub const KINK_MARGIN: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[i]` with the central difference of `eval` in
/// `x.data()[i]` for every `i` in `indices`.
fn check_tensor(
    tally: &mut Tally,
    x: &mut Tensor,
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    eval: impl Fn(&Tensor) -> f64,
) {
    for i in indices {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + STEP;
        let plus = eval(x);
        x.data_mut()[i] = orig - STEP;
        let minus = eval(x);
        x.data_mut()[i] = orig;
        tally.record(rel_error(analytic[i], (plus - minus) / (2.0 * STEP)));
    }
}

/// Same as [`check_tensor`] over every tensor of a parameter record;
/// `pick(len)` chooses the entries of each tensor.
fn check_params<P: ParamSet>(
    tally: &mut Tally,
    params: &mut P,
    grads: &P,
    mut pick: impl FnMut(usize) -> Vec<usize>,
    eval: impl Fn(&P) -> f64,
) {
    let analytic: Vec<Vec<f64>> = grads
        .tensors()
        .into_iter()
        .map(|(_, t)| t.to_vec())
        .collect();
    for (k, g) in analytic.iter().enumerate() {
        for i in pick(g.len()) {
            let orig = params.tensors()[k].1[i];
            params.tensors_mut()[k].1[i] = orig + STEP;
            let plus = eval(params);
            params.tensors_mut()[k].1[i] = orig - STEP;
            let minus = eval(params);
            params.tensors_mut()[k].1[i] = orig;
            tally.record(rel_error(g[i], (plus - minus) / (2.0 * STEP)));
        }
    }
}

fn sampled(init: &mut Initializer, len: usize, count: usize) -> Vec<usize> {
    let mut v = sample(init.rng(), len, count.min(len)).into_vec();
    v.sort_unstable();
    v
}

/// Both operands of the adaptive convolution, through `⟨out, u⟩`.
pub fn adaptive_conv_suite(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    for _ in 0..INSTANCES {
        let rng = init.rng();
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=4);
        let (h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let d = [1, 3, 5][rng.gen_range(0..3)];
        let groups = if rng.gen_bool(0.5) { 1 } else { c };
        let mut f = init.tensor(Shape::new(n, c, h, w), -1.0, 1.0);
        let mut k = init.tensor(Shape::new(n, TAPS * groups, h, w), -1.0, 1.0);
        let u = init.tensor(f.shape(), -1.0, 1.0);
        let field = KernelField::new(k.clone())?;
        let (gf, gk) = adaptive_conv_backward(&f, &field, d, &u)?;
        let len = f.shape().len();
        check_tensor(&mut tally, &mut f, gf.data(), 0..len, |x| {
            adaptive_conv(x, &field, d).expect("valid operands").dot(&u)
        });
        let f = f.clone();
        let len = k.shape().len();
        check_tensor(&mut tally, &mut k, gk.raw().data(), 0..len, |x| {
            let field = KernelField::new(x.clone()).expect("9·G channels");
            adaptive_conv(&f, &field, d)
                .expect("valid operands")
                .dot(&u)
        });
    }
    Ok(tally.finish("adaptive_conv", INSTANCES, GRAD_TOL, false))
}

fn ddpm_instance(
    tally: &mut Tally,
    init: &mut Initializer,
    cfg: DdpmConfig,
    shape: (usize, usize, usize),
    pick_input: &mut dyn FnMut(&mut Initializer, usize) -> Vec<usize>,
    pick_param: &mut dyn FnMut(&mut Initializer, usize) -> Vec<usize>,
) -> Result<()> {
    let (n, h, w) = shape;
    let (mut params, mut x, mut t) = loop {
        let params = DdpmParams::init(cfg, init);
        let x = init.tensor(Shape::new(n, cfg.channels, h, w), -1.0, 1.0);
        let t = init.tensor(Shape::new(n, cfg.guide_channels, h, w), -1.0, 1.0);
        let mut margin = f64::INFINITY;
        for unit in &params.kgu {
            margin = margin.min(unit.relu_margin(&t)?);
        }
        if margin >= KINK_MARGIN {
            break (params, x, t);
        }
    };
    let u = init.tensor(x.shape(), -1.0, 1.0);
    let (_, cache) = ddpm_forward_cached(&x, &t, &params)?;
    let g = ddpm_backward(&cache, &params, &u)?;
    let scalar = |x: &Tensor, t: &Tensor, p: &DdpmParams| {
        ddpm_forward(x, t, p).expect("valid operands").dot(&u)
    };

    let idx = pick_input(init, x.shape().len());
    check_tensor(tally, &mut x, g.f_drgb.data(), idx, |x| {
        scalar(x, &t, &params)
    });
    let idx = pick_input(init, t.shape().len());
    check_tensor(tally, &mut t, g.f_tm.data(), idx, |t| {
        scalar(&x, t, &params)
    });
    check_params(
        tally,
        &mut params,
        &g.params,
        |len| pick_param(init, len),
        |p| scalar(&x, &t, p),
    );
    Ok(())
}

/// The pyramid module with all inputs and every parameter entry checked,
/// at reduced channel widths.
pub fn ddpm_suite(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    let all = |_: &mut Initializer, len: usize| (0..len).collect::<Vec<_>>();
    for _ in 0..INSTANCES {
        let rng = init.rng();
        let cfg = DdpmConfig {
            channels: rng.gen_range(2..=3),
            reduced: rng.gen_range(1..=2),
            guide_channels: 2,
            kgu_growth: 2,
            kgu_layers: 4,
        };
        let shape = (
            rng.gen_range(1..=2),
            rng.gen_range(3..=5),
            rng.gen_range(3..=5),
        );
        ddpm_instance(&mut tally, &mut init, cfg, shape, &mut { all }, &mut {
            all
        })?;
    }
    Ok(tally.finish("ddpm (reduced widths)", INSTANCES, GRAD_TOL, false))
}

/// The pyramid module at full widths on `1×64×6×6`, sampling entries of
/// each input and parameter tensor.
pub fn ddpm_full_suite(seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    ddpm_instance(
        &mut tally,
        &mut init,
        DdpmConfig::default(),
        (1, 6, 6),
        &mut |init, len| sampled(init, len, 24),
        &mut |init, len| sampled(init, len, 3),
    )?;
    Ok(tally.finish("ddpm (1x64x6x6, sampled)", 1, GRAD_TOL, false))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    Eel,
    Rel,
    Hel,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Bce, LossKind::Eel, LossKind::Rel, LossKind::Hel];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Eel => "eel",
            LossKind::Rel => "rel",
            LossKind::Hel => "hel",
        }
    }

    pub fn eval(self, p: &Tensor, g: &Tensor) -> Result<LossValue> {
        match self {
            LossKind::Bce => bce_loss(p, g),
            LossKind::Eel => eel_loss(p, g),
            LossKind::Rel => rel_loss(p, g),
            LossKind::Hel => hel_loss(p, g),
        }
    }

    /// Bound on the per-element relative error.
    pub fn tolerance(self) -> f64 {
        match self {
            LossKind::Bce | LossKind::Rel => SMOOTH_TOL,
            LossKind::Eel | LossKind::Hel => GRAD_TOL,
        }
    }
}

/// Binary ground truth made of a random rectangle per sample, or empty or
/// full with small probability.
fn random_gt(init: &mut Initializer, shape: Shape) -> Tensor {
    let mut g = Tensor::zeros(shape);
    for n in 0..shape.n {
        let rng = init.rng();
        let kind = rng.gen_range(0..10);
        let (y0, x0) = (rng.gen_range(0..shape.h), rng.gen_range(0..shape.w));
        let (y1, x1) = (
            rng.gen_range(y0..shape.h) + 1,
            rng.gen_range(x0..shape.w) + 1,
        );
        for c in 0..shape.c {
            for y in 0..shape.h {
                for x in 0..shape.w {
                    let inside = (y0..y1).contains(&y) && (x0..x1).contains(&x);
                    g[[n, c, y, x]] = match kind {
                        0 => 0.0,
                        1 => 1.0,
                        _ if inside => 1.0,
                        _ => 0.0,
                    };
                }
            }
        }
    }
    g
}

/// One loss, all prediction entries, predictions in `[0.05, 0.95]`.
pub fn loss_suite(kind: LossKind, seed: u64) -> Result<SuiteResult> {
    let mut init = Initializer::new(seed);
    let mut tally = Tally::new();
    for _ in 0..INSTANCES {
        let rng = init.rng();
        let shape = Shape::new(
            rng.gen_range(1..=2),
            rng.gen_range(1..=2),
            rng.gen_range(4..=10),
            rng.gen_range(4..=10),
        );
        let g = random_gt(&mut init, shape);
        let mut p = init.tensor(shape, 0.05, 0.95);
        let analytic = kind.eval(&p, &g)?.grad;
        check_tensor(&mut tally, &mut p, analytic.data(), 0..shape.len(), |p| {
            kind.eval(p, &g).expect("valid operands").value
        });
    }
    Ok(tally.finish(kind.name(), INSTANCES, kind.tolerance(), false))
}

/// Every gradient suite in a fixed order.
pub fn gradient_suites(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        adaptive_conv_suite(seed)?,
        ddpm_suite(seed.wrapping_add(1))?,
        ddpm_full_suite(seed.wrapping_add(2))?,
    ];
    for (i, kind) in LossKind::ALL.into_iter().enumerate() {
        out.push(loss_suite(kind, seed.wrapping_add(3 + i as u64))?);
    }
    Ok(out)
}
