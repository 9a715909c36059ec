//! Desk-scale two-stream network.
//!
//! Two stub encoders (RGB and depth) produce features at 1/4, 1/8 and 1/16
//! of the input resolution. At each of those levels a dense transport
//! layer mixes the two streams, a pyramid module filters the decoder state
//! with kernels generated from the mixture, and the result is upsampled and
//! added to the next shallower RGB feature. A 1×1 head and a sigmoid give
//! the saliency map, resized back to the input resolution.
//!
//! Feature levels are indexed 0, 1, 2 for 1/4, 1/8 and 1/16 resolution.

use crate::dense::{with_grads, DenseBlock, DenseCache};
use crate::dynfilter::{ddpm_backward, ddpm_forward_cached, DdpmCache, DdpmConfig, DdpmParams};
use crate::error::{ensure_dim, Error, Result};
use crate::init::Initializer;
use crate::params::{prefixed, ParamSet};
use crate::tensor::{
    avg_pool, avg_pool_backward, concat_channels, conv2d, conv2d_backward, relu, relu_backward,
    resize_bilinear, resize_bilinear_backward, sigmoid, sigmoid_backward, split_channels,
    upsample2x, upsample2x_backward, ConvParams, Shape, Tensor,
};

pub const LEVELS: usize = 3;

/// Index of the first encoder stage whose output is used.
const FIRST_USED_STAGE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub encoder_channels: [usize; 5],
    /// Width of every decoder-side feature.
    pub width: usize,
    pub transport_growth: usize,
    pub transport_layers: usize,
    pub ddpm: DdpmConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            encoder_channels: [16, 32, 64, 64, 64],
            width: 64,
            transport_growth: 16,
            transport_layers: 4,
            ddpm: DdpmConfig::default(),
        }
    }
}

/// Five 3×3 conv+relu stages separated by 2× average pooling, plus 1×1
/// reductions of the last three stages.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub stages: Vec<ConvParams>,
    pub reduce: Vec<ConvParams>,
}

impl EncoderParams {
    pub fn init(in_ch: usize, cfg: &NetConfig, init: &mut Initializer) -> Self {
        let mut prev = in_ch;
        let mut stages = Vec::with_capacity(5);
        for &c in &cfg.encoder_channels {
            stages.push(init.conv(c, prev, 3));
            prev = c;
        }
        let reduce = cfg.encoder_channels[FIRST_USED_STAGE..]
            .iter()
            .map(|&c| init.conv(cfg.width, c, 1))
            .collect();
        EncoderParams { stages, reduce }
    }

    pub fn in_ch(&self) -> usize {
        self.stages[0].in_ch()
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("stages", self.stages.tensors());
        v.extend(prefixed("reduce", self.reduce.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = prefixed("stages", self.stages.tensors_mut());
        v.extend(prefixed("reduce", self.reduce.tensors_mut()));
        v
    }
}

/// Reduced encoder features at 1/4, 1/8 and 1/16 resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFeatures {
    pub levels: [Tensor; LEVELS],
}

impl StreamFeatures {
    pub fn f3(&self) -> &Tensor {
        &self.levels[0]
    }
    pub fn f4(&self) -> &Tensor {
        &self.levels[1]
    }
    pub fn f5(&self) -> &Tensor {
        &self.levels[2]
    }
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    /// Input of each stage (the image, then pooled activations).
    inputs: Vec<Tensor>,
    /// Post-relu output of each stage.
    acts: Vec<Tensor>,
}

fn check_divisible(op: &'static str, s: Shape) -> Result<()> {
    if s.h == 0 || s.w == 0 || !s.h.is_multiple_of(16) || !s.w.is_multiple_of(16) {
        return Err(Error::contract(
            op,
            format!(
                "spatial size {}x{} must be a positive multiple of 16",
                s.h, s.w
            ),
        ));
    }
    Ok(())
}

pub fn encoder_forward(image: &Tensor, params: &EncoderParams) -> Result<StreamFeatures> {
    Ok(encoder_forward_cached(image, params)?.0)
}

pub fn encoder_forward_cached(
    image: &Tensor,
    params: &EncoderParams,
) -> Result<(StreamFeatures, EncoderCache)> {
    check_divisible("encoder_forward", image.shape())?;
    ensure_dim(
        "encoder_forward",
        "input channels",
        params.in_ch(),
        image.shape().c,
    )?;
    let mut inputs = Vec::with_capacity(params.stages.len());
    let mut acts: Vec<Tensor> = Vec::with_capacity(params.stages.len());
    for (i, stage) in params.stages.iter().enumerate() {
        let x = match acts.last() {
            None => image.clone(),
            Some(prev) => avg_pool(prev, 2, 2, 0)?,
        };
        let a = relu(&conv2d(&x, stage)?);
        inputs.push(x);
        acts.push(a);
        debug_assert_eq!(inputs.len(), i + 1);
    }
    let mut levels = Vec::with_capacity(LEVELS);
    for (l, red) in params.reduce.iter().enumerate() {
        levels.push(conv2d(&acts[FIRST_USED_STAGE + l], red)?);
    }
    let levels: [Tensor; LEVELS] = levels
        .try_into()
        .map_err(|_| Error::contract("encoder_forward", "expected three reductions"))?;
    Ok((StreamFeatures { levels }, EncoderCache { inputs, acts }))
}

/// Parameter gradients of the encoder given gradients of its three outputs.
pub fn encoder_backward(
    cache: &EncoderCache,
    params: &EncoderParams,
    grads: &[Tensor; LEVELS],
) -> Result<EncoderParams> {
    let n_stages = params.stages.len();
    let mut grad_acts: Vec<Option<Tensor>> = vec![None; n_stages];
    let mut reduce = Vec::with_capacity(LEVELS);
    for (l, red) in params.reduce.iter().enumerate() {
        let i = FIRST_USED_STAGE + l;
        let g = conv2d_backward(&cache.acts[i], red, &grads[l])?;
        grad_acts[i] = Some(g.input);
        reduce.push(with_grads(red, g.weight, g.bias));
    }
    let mut stages = vec![None; n_stages];
    for i in (0..n_stages).rev() {
        let ga = grad_acts[i]
            .take()
            .unwrap_or_else(|| Tensor::zeros(cache.acts[i].shape()));
        let gz = relu_backward(&cache.acts[i], &ga)?;
        let g = conv2d_backward(&cache.inputs[i], &params.stages[i], &gz)?;
        stages[i] = Some(with_grads(&params.stages[i], g.weight, g.bias));
        if i > 0 {
            let gp = avg_pool_backward(cache.acts[i - 1].shape(), 2, 2, 0, &g.input)?;
            match grad_acts[i - 1].as_mut() {
                Some(acc) => acc.add_assign(&gp)?,
                None => grad_acts[i - 1] = Some(gp),
            }
        }
    }
    Ok(EncoderParams {
        stages: stages
            .into_iter()
            .map(|s| s.expect("every stage visited"))
            .collect(),
        reduce,
    })
}

/// Dense transport layer: concatenate the two streams and mix them.
pub fn transport_forward(f_rgb: &Tensor, f_d: &Tensor, params: &DenseBlock) -> Result<Tensor> {
    Ok(transport_forward_cached(f_rgb, f_d, params)?.0)
}

fn transport_forward_cached(
    f_rgb: &Tensor,
    f_d: &Tensor,
    params: &DenseBlock,
) -> Result<(Tensor, DenseCache)> {
    crate::tensor::ensure_same_shape("transport_forward", f_rgb.shape(), f_d.shape())?;
    let mixed = concat_channels(&[f_rgb, f_d])?;
    params.forward_cached(&mixed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdfnetParams {
    pub rgb_encoder: EncoderParams,
    pub depth_encoder: EncoderParams,
    pub transport: [DenseBlock; LEVELS],
    pub ddpm: [DdpmParams; LEVELS],
    pub decoder: [ConvParams; LEVELS],
    pub head: ConvParams,
}

impl HdfnetParams {
    pub fn init(cfg: &NetConfig, seed: u64) -> Self {
        let mut init = Initializer::new(seed);
        let rgb_encoder = EncoderParams::init(3, cfg, &mut init);
        let depth_encoder = EncoderParams::init(1, cfg, &mut init);
        let transport = std::array::from_fn(|_| {
            DenseBlock::init(
                2 * cfg.width,
                cfg.transport_growth,
                cfg.transport_layers,
                cfg.width,
                &mut init,
            )
        });
        let ddpm_cfg = DdpmConfig {
            channels: cfg.width,
            guide_channels: cfg.width,
            ..cfg.ddpm
        };
        let ddpm = std::array::from_fn(|_| DdpmParams::init(ddpm_cfg, &mut init));
        let decoder = std::array::from_fn(|_| init.conv(cfg.width, cfg.width, 3));
        let head = init.conv(1, cfg.width, 1);
        HdfnetParams {
            rgb_encoder,
            depth_encoder,
            transport,
            ddpm,
            decoder,
            head,
        }
    }
}

impl ParamSet for HdfnetParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("rgb_encoder", self.rgb_encoder.tensors());
        v.extend(prefixed("depth_encoder", self.depth_encoder.tensors()));
        for l in 0..LEVELS {
            v.extend(prefixed(
                &format!("transport{}", l + 3),
                self.transport[l].tensors(),
            ));
            v.extend(prefixed(&format!("ddpm{}", l + 3), self.ddpm[l].tensors()));
            v.extend(prefixed(
                &format!("decoder{}", l + 3),
                self.decoder[l].tensors(),
            ));
        }
        v.extend(prefixed("head", self.head.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = prefixed("rgb_encoder", self.rgb_encoder.tensors_mut());
        v.extend(prefixed("depth_encoder", self.depth_encoder.tensors_mut()));
        for ((l, t), (d, c)) in self
            .transport
            .iter_mut()
            .enumerate()
            .zip(self.ddpm.iter_mut().zip(self.decoder.iter_mut()))
        {
            v.extend(prefixed(&format!("transport{}", l + 3), t.tensors_mut()));
            v.extend(prefixed(&format!("ddpm{}", l + 3), d.tensors_mut()));
            v.extend(prefixed(&format!("decoder{}", l + 3), c.tensors_mut()));
        }
        v.extend(prefixed("head", self.head.tensors_mut()));
        v
    }
}

#[derive(Clone, Debug)]
pub struct HdfnetCache {
    rgb: EncoderCache,
    depth: EncoderCache,
    transport: Vec<DenseCache>,
    ddpm: Vec<DdpmCache>,
    /// Shape of each pyramid module's output.
    ddpm_out: Vec<Shape>,
    /// Input and post-relu output of each decoder refinement, per level.
    decoder_in: Vec<Tensor>,
    decoder_out: Vec<Tensor>,
    head_in: Tensor,
    head_out: Tensor,
}

/// Saliency prediction in `(0, 1)` with the input's spatial size.
pub fn hdfnet_forward(rgb: &Tensor, depth: &Tensor, params: &HdfnetParams) -> Result<Tensor> {
    Ok(hdfnet_forward_cached(rgb, depth, params)?.0)
}

pub fn hdfnet_forward_cached(
    rgb: &Tensor,
    depth: &Tensor,
    params: &HdfnetParams,
) -> Result<(Tensor, HdfnetCache)> {
    let (rs, ds) = (rgb.shape(), depth.shape());
    check_divisible("hdfnet_forward", rs)?;
    ensure_dim("hdfnet_forward", "depth batch", rs.n, ds.n)?;
    ensure_dim("hdfnet_forward", "depth height", rs.h, ds.h)?;
    ensure_dim("hdfnet_forward", "depth width", rs.w, ds.w)?;

    let (f_rgb, rgb_cache) = encoder_forward_cached(rgb, &params.rgb_encoder)?;
    let (f_d, depth_cache) = encoder_forward_cached(depth, &params.depth_encoder)?;

    let mut tm = Vec::with_capacity(LEVELS);
    let mut transport = Vec::with_capacity(LEVELS);
    for l in 0..LEVELS {
        let (t, c) =
            transport_forward_cached(&f_rgb.levels[l], &f_d.levels[l], &params.transport[l])?;
        tm.push(t);
        transport.push(c);
    }

    let mut ddpm = vec![None; LEVELS];
    let mut ddpm_out = vec![Shape::new(0, 0, 0, 0); LEVELS];
    let mut decoder_in = vec![None; LEVELS];
    let mut decoder_out = vec![None; LEVELS];
    let mut state = f_rgb.levels[LEVELS - 1].clone();
    for l in (0..LEVELS).rev() {
        let (m, cache) = ddpm_forward_cached(&state, &tm[l], &params.ddpm[l])?;
        ddpm_out[l] = m.shape();
        let z = if l > 0 {
            upsample2x(&m)?.add(&f_rgb.levels[l - 1])?
        } else {
            m
        };
        state = relu(&conv2d(&z, &params.decoder[l])?);
        ddpm[l] = Some(cache);
        decoder_in[l] = Some(z);
        decoder_out[l] = Some(state.clone());
    }

    let head_out = sigmoid(&conv2d(&state, &params.head)?);
    let pred = resize_bilinear(&head_out, rs.h, rs.w)?;
    let cache = HdfnetCache {
        rgb: rgb_cache,
        depth: depth_cache,
        transport,
        ddpm: ddpm
            .into_iter()
            .map(|c| c.expect("level visited"))
            .collect(),
        ddpm_out,
        decoder_in: decoder_in
            .into_iter()
            .map(|c| c.expect("level visited"))
            .collect(),
        decoder_out: decoder_out
            .into_iter()
            .map(|c| c.expect("level visited"))
            .collect(),
        head_in: state,
        head_out,
    };
    Ok((pred, cache))
}

/// Parameter gradients of `⟨prediction, grad_pred⟩`.
pub fn hdfnet_backward(
    cache: &HdfnetCache,
    params: &HdfnetParams,
    grad_pred: &Tensor,
) -> Result<HdfnetParams> {
    let g_head_out = resize_bilinear_backward(cache.head_out.shape(), grad_pred)?;
    let g_logits = sigmoid_backward(&cache.head_out, &g_head_out)?;
    let head = conv2d_backward(&cache.head_in, &params.head, &g_logits)?;
    let head_grads = with_grads(&params.head, head.weight, head.bias);

    let mut g_rgb: [Option<Tensor>; LEVELS] = Default::default();
    let mut g_tm: [Option<Tensor>; LEVELS] = Default::default();
    let mut decoder = Vec::with_capacity(LEVELS);
    let mut ddpm = Vec::with_capacity(LEVELS);

    // Walk the top-down pathway in reverse: level 0 first.
    let mut g_state = head.input;
    for l in 0..LEVELS {
        let gz = relu_backward(&cache.decoder_out[l], &g_state)?;
        let dec = conv2d_backward(&cache.decoder_in[l], &params.decoder[l], &gz)?;
        decoder.push(with_grads(&params.decoder[l], dec.weight, dec.bias));
        let g_m = if l > 0 {
            accumulate(&mut g_rgb[l - 1], &dec.input)?;
            upsample2x_backward(cache.ddpm_out[l], &dec.input)?
        } else {
            dec.input
        };
        let d = ddpm_backward(&cache.ddpm[l], &params.ddpm[l], &g_m)?;
        g_tm[l] = Some(d.f_tm);
        ddpm.push(d.params);
        if l + 1 < LEVELS {
            g_state = d.f_drgb;
        } else {
            accumulate(&mut g_rgb[l], &d.f_drgb)?;
        }
    }

    let mut g_d: [Option<Tensor>; LEVELS] = Default::default();
    let mut transport = Vec::with_capacity(LEVELS);
    for l in 0..LEVELS {
        let g = g_tm[l].take().expect("every level has a pyramid module");
        let (g_mixed, gp) = params.transport[l].backward(&cache.transport[l], &g)?;
        let width = g_mixed.shape().c / 2;
        let mut parts = split_channels(&g_mixed, &[width, width])?;
        g_d[l] = parts.pop();
        accumulate(&mut g_rgb[l], &parts[0])?;
        transport.push(gp);
    }

    // Every level receives gradient from its transport layer.
    let g_rgb: [Tensor; LEVELS] =
        std::array::from_fn(|l| g_rgb[l].take().expect("transport gradient"));
    let g_d: [Tensor; LEVELS] = std::array::from_fn(|l| g_d[l].take().expect("transport gradient"));
    let rgb_encoder = encoder_backward(&cache.rgb, &params.rgb_encoder, &g_rgb)?;
    let depth_encoder = encoder_backward(&cache.depth, &params.depth_encoder, &g_d)?;

    Ok(HdfnetParams {
        rgb_encoder,
        depth_encoder,
        transport: into_array(transport)?,
        ddpm: into_array(ddpm)?,
        decoder: into_array(decoder)?,
        head: head_grads,
    })
}

fn into_array<T>(v: Vec<T>) -> Result<[T; LEVELS]> {
    v.try_into()
        .map_err(|_| Error::contract("hdfnet_backward", "level count"))
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_tensor;

    #[test]
    fn encoder_shapes() {
        let params = HdfnetParams::init(&NetConfig::default(), 1);
        let f = encoder_forward(
            &random_tensor(Shape::new(1, 3, 64, 64), 1),
            &params.rgb_encoder,
        )
        .unwrap();
        assert_eq!(f.f3().shape(), Shape::new(1, 64, 16, 16));
        assert_eq!(f.f4().shape(), Shape::new(1, 64, 8, 8));
        assert_eq!(f.f5().shape(), Shape::new(1, 64, 4, 4));
    }

    #[test]
    fn encoder_rejects_indivisible_input() {
        let params = HdfnetParams::init(&NetConfig::default(), 1);
        let err = encoder_forward(
            &Tensor::zeros(Shape::new(1, 3, 40, 64)),
            &params.rgb_encoder,
        );
        assert!(matches!(err, Err(Error::Contract { .. })));
    }

    #[test]
    fn depth_encoder_takes_one_channel() {
        let params = HdfnetParams::init(&NetConfig::default(), 1);
        assert_eq!(params.depth_encoder.in_ch(), 1);
        assert_eq!(params.rgb_encoder.in_ch(), 3);
        assert!(encoder_forward(
            &Tensor::zeros(Shape::new(1, 3, 32, 32)),
            &params.depth_encoder
        )
        .is_err());
    }

    #[test]
    fn zero_input_zero_bias_encoder_is_zero() {
        let mut params = HdfnetParams::init(&NetConfig::default(), 2).rgb_encoder;
        for (name, t) in params.tensors_mut() {
            if name.ends_with("bias") {
                t.fill(0.0);
            }
        }
        let f = encoder_forward(&Tensor::zeros(Shape::new(1, 3, 32, 32)), &params).unwrap();
        assert!(f.levels.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn transport_shape_and_zero_case() {
        let mut params = HdfnetParams::init(&NetConfig::default(), 3).transport[0].clone();
        let a = random_tensor(Shape::new(1, 64, 8, 8), 1);
        let b = random_tensor(Shape::new(1, 64, 8, 8), 2);
        assert_eq!(
            transport_forward(&a, &b, &params).unwrap().shape(),
            Shape::new(1, 64, 8, 8)
        );
        for (name, t) in params.tensors_mut() {
            if name.ends_with("bias") {
                t.fill(0.0);
            }
        }
        let z = Tensor::zeros(Shape::new(1, 64, 8, 8));
        assert!(transport_forward(&z, &z, &params)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(transport_forward(&a, &Tensor::zeros(Shape::new(1, 64, 4, 4)), &params).is_err());
    }

    #[test]
    fn prediction_shape_and_range() {
        let params = HdfnetParams::init(&NetConfig::default(), 4);
        let rgb = random_tensor(Shape::new(1, 3, 32, 32), 1);
        let depth = random_tensor(Shape::new(1, 1, 32, 32), 2);
        let p = hdfnet_forward(&rgb, &depth, &params).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 1, 32, 32));
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn param_names_are_unique() {
        let params = HdfnetParams::init(&NetConfig::default(), 4);
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(names.contains(&"ddpm5.kgu3.projection.weight".to_string()));
    }

    fn axpy(params: &mut HdfnetParams, dir: &HdfnetParams, step: f64) {
        for ((_, p), (_, d)) in params.tensors_mut().into_iter().zip(dir.tensors()) {
            p.iter_mut().zip(d).for_each(|(pv, dv)| *pv += step * dv);
        }
    }

    #[test]
    fn backward_matches_directional_difference() {
        let cfg = NetConfig {
            encoder_channels: [3, 4, 4, 4, 4],
            width: 4,
            transport_growth: 2,
            transport_layers: 2,
            ddpm: DdpmConfig {
                channels: 4,
                reduced: 2,
                guide_channels: 4,
                kgu_growth: 2,
                kgu_layers: 4,
            },
        };
        let params = HdfnetParams::init(&cfg, 11);
        let rgb = random_tensor(Shape::new(1, 3, 32, 32), 12);
        let depth = random_tensor(Shape::new(1, 1, 32, 32), 13);
        let u = random_tensor(Shape::new(1, 1, 32, 32), 14);
        let (_, cache) = hdfnet_forward_cached(&rgb, &depth, &params).unwrap();
        let grads = hdfnet_backward(&cache, &params, &u).unwrap();
        for seed in 0..3 {
            let dir = HdfnetParams::init(&cfg, 100 + seed);
            let analytic: f64 = grads
                .tensors()
                .iter()
                .zip(dir.tensors())
                .map(|((_, g), (_, d))| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            let h = 1e-5;
            let mut p = params.clone();
            axpy(&mut p, &dir, h);
            let plus = hdfnet_forward(&rgb, &depth, &p).unwrap().dot(&u);
            axpy(&mut p, &dir, -2.0 * h);
            let minus = hdfnet_forward(&rgb, &depth, &p).unwrap().dot(&u);
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(err < 1e-4, "direction {seed}: {analytic} vs {numeric}");
        }
    }
}
