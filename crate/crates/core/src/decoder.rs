//! The composition decoder: a five-layer convolutional stack mapping a
//! `14 x 14 x C` feature tensor to a `5 x 5 x k^2` position score map.
//!
//! Every layer is stride 1 with no zero padding, so spatial size shrinks
//! 14 -> 12 -> 10 -> 8 -> 5 -> 5 (kernels 3, 3, 3, 4, 1). Batch
//! normalization is applied to the input of each convolution, leaky ReLU to
//! the output of conv1..conv4; the final 1x1 `pos_map` layer is linear.
//!
//! The stack is fully convolutional: a `16 x 16` input yields a `7 x 7`
//! map, which is how padded glimpse maps are produced.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io_formats::{FormatError, Tensor};
use crate::scoremap::{PaddedScoreMap, PositionScoreMap, ScoreMapError};

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "conv3", "conv4", "pos_map"];
pub const KERNEL_SIZES: [usize; 5] = [3, 3, 3, 4, 1];
/// Spatial size of a plain glimpse feature tensor.
pub const INPUT_SIDE: usize = 14;
/// Spatial size of a feature tensor for an enlarged glimpse.
pub const PADDED_INPUT_SIDE: usize = 16;
/// Total spatial shrinkage through the stack.
pub const SHRINK: usize = 9;
pub const LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum DecoderError {
    #[error("invalid decoder widths: {0}")]
    InvalidWidths(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("feature tensor contains non-finite values")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
    #[error("forward cache is stale: parameters changed after the forward pass")]
    StaleCache,
    #[error("parameter file is missing `{0}`")]
    MissingParam(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    ScoreMap(#[from] ScoreMapError),
}

pub type Result<T, E = DecoderError> = std::result::Result<T, E>;

fn shape_err(expected: impl Into<String>, found: impl Into<String>) -> DecoderError {
    DecoderError::ShapeMismatch {
        expected: expected.into(),
        found: found.into(),
    }
}

/// A `height x width x channels` tensor, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(shape_err(
                format!("{height}x{width}x{channels}"),
                format!("{} values", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecoderError::NonFinite);
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.dims() {
            &[h, w, c] => Self::new(h, w, c, t.to_f64()),
            other => Err(shape_err("3-d tensor", format!("{other:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(self.dims().to_vec(), self.values.clone())
            .expect("feature tensor dims match its values")
    }

    /// Reinterprets a decoder output as a `k x k x k^2` score map.
    pub fn into_position_map(self) -> Result<PositionScoreMap> {
        Ok(PositionScoreMap::from_shape(&self.dims(), self.values)?)
    }

    /// Reinterprets a decoder output as a `(k+2) x (k+2) x k^2` padded map.
    pub fn into_padded_map(self) -> Result<PaddedScoreMap> {
        Ok(PaddedScoreMap::from_shape(&self.dims(), self.values)?)
    }
}

/// Channel widths and normalization switches of the decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub in_channels: usize,
    /// Output channels of conv1, conv2, conv3, conv4, pos_map; the last is `k^2`.
    pub widths: [usize; 5],
    pub batch_norm: bool,
    /// Whether batch normalization also precedes `pos_map`.
    pub norm_before_pos_map: bool,
}

impl DecoderConfig {
    /// Full-width preset: 1280 input channels, widths 512/512/1024/2048.
    pub fn full(k: usize) -> Self {
        Self {
            in_channels: 1280,
            widths: [512, 512, 1024, 2048, k * k],
            batch_norm: true,
            norm_before_pos_map: true,
        }
    }

    /// Desk-scale preset with the same topology at roughly 1/64 width.
    pub fn desk(k: usize) -> Self {
        Self {
            in_channels: 8,
            widths: [8, 8, 16, 32, k * k],
            batch_norm: true,
            norm_before_pos_map: true,
        }
    }

    /// Two channels everywhere except the output; used for gradient checks.
    pub fn tiny(k: usize) -> Self {
        Self {
            in_channels: 2,
            widths: [2, 2, 2, 2, k * k],
            batch_norm: true,
            norm_before_pos_map: true,
        }
    }

    pub fn preset(name: &str, k: usize) -> Option<Self> {
        match name {
            "full" => Some(Self::full(k)),
            "desk" => Some(Self::desk(k)),
            "tiny" => Some(Self::tiny(k)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.widths.contains(&0) {
            return Err(DecoderError::InvalidWidths("widths must be positive".into()));
        }
        let out = self.widths[4];
        let k = (out as f64).sqrt().round() as usize;
        if k * k != out {
            return Err(DecoderError::InvalidWidths(format!(
                "pos_map width {out} is not a square k^2"
            )));
        }
        Ok(())
    }

    /// Grid size `k` of the produced score maps.
    pub fn k(&self) -> usize {
        (self.widths[4] as f64).sqrt().round() as usize
    }

    fn has_norm(&self, layer: usize) -> bool {
        self.batch_norm && (layer < 4 || self.norm_before_pos_map)
    }

    fn layer_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.in_channels
        } else {
            self.widths[layer - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub ksize: usize,
    pub cin: usize,
    pub cout: usize,
    /// `[ky][kx][cin][cout]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// Which role a learnable parameter block plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Kernel,
    Bias,
    NormScale,
    NormShift,
}

impl ParamKind {
    /// Kernels and biases carry the L2 penalty; normalization scale/shift do not.
    pub fn regularized(self) -> bool {
        matches!(self, ParamKind::Kernel | ParamKind::Bias)
    }
}

/// All decoder parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    config: DecoderConfig,
    convs: Vec<ConvLayer>,
    norms: Vec<Option<BatchNorm>>,
    version: u64,
}

/// Xavier-uniform kernels, zero biases, identity normalization.
pub fn init_params(seed: u64, config: &DecoderConfig) -> Result<DecoderParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convs = Vec::with_capacity(5);
    let mut norms = Vec::with_capacity(5);
    for layer in 0..5 {
        let ksize = KERNEL_SIZES[layer];
        let cin = config.layer_in(layer);
        let cout = config.widths[layer];
        let fan_in = ksize * ksize * cin;
        let fan_out = ksize * ksize * cout;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = (0..ksize * ksize * cin * cout)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        convs.push(ConvLayer {
            ksize,
            cin,
            cout,
            weight,
            bias: vec![0.0; cout],
        });
        norms.push(config.has_norm(layer).then(|| BatchNorm::identity(cin)));
    }
    Ok(DecoderParams {
        config: config.clone(),
        convs,
        norms,
        version: 0,
    })
}

impl DecoderParams {
    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k()
    }

    pub fn convs(&self) -> &[ConvLayer] {
        &self.convs
    }

    pub fn norms(&self) -> &[Option<BatchNorm>] {
        &self.norms
    }

    /// Mutable access to one layer; invalidates outstanding forward caches.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut ConvLayer, Option<&mut BatchNorm>) {
        self.version += 1;
        (&mut self.convs[layer], self.norms[layer].as_mut())
    }

    /// Learnable blocks in a fixed order: per layer kernel, bias, then
    /// normalization scale and shift when present.
    pub fn learnable(&self) -> Vec<(ParamKind, &[f64])> {
        let mut out = Vec::new();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            out.push((ParamKind::Kernel, conv.weight.as_slice()));
            out.push((ParamKind::Bias, conv.bias.as_slice()));
            if let Some(bn) = norm {
                out.push((ParamKind::NormScale, bn.gamma.as_slice()));
                out.push((ParamKind::NormShift, bn.beta.as_slice()));
            }
        }
        out
    }

    /// Mutable view of [`DecoderParams::learnable`]; invalidates forward caches.
    pub fn learnable_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        self.version += 1;
        let mut out = Vec::new();
        for (conv, norm) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push((ParamKind::Kernel, conv.weight.as_mut_slice()));
            out.push((ParamKind::Bias, conv.bias.as_mut_slice()));
            if let Some(bn) = norm {
                out.push((ParamKind::NormScale, bn.gamma.as_mut_slice()));
                out.push((ParamKind::NormShift, bn.beta.as_mut_slice()));
            }
        }
        out
    }

    pub fn flatten_learnable(&self) -> Vec<f64> {
        self.learnable().into_iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    pub fn load_learnable(&mut self, flat: &[f64]) {
        let mut at = 0;
        for (_, block) in self.learnable_mut() {
            block.copy_from_slice(&flat[at..at + block.len()]);
            at += block.len();
        }
        assert_eq!(at, flat.len(), "flat parameter vector has the wrong length");
    }

    /// Squared Frobenius norm of all kernels and biases.
    pub fn l2_norm_sq(&self) -> f64 {
        self.learnable()
            .into_iter()
            .filter(|(kind, _)| kind.regularized())
            .flat_map(|(_, s)| s.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics used in eval mode.
    pub fn update_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        for (norm, layer) in self.norms.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(stats)) = (norm.as_mut(), layer.norm.as_ref()) {
                let n = stats.count as f64;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for c in 0..bn.running_mean.len() {
                    bn.running_mean[c] = (1.0 - momentum) * bn.running_mean[c] + momentum * stats.mean[c];
                    bn.running_var[c] =
                        (1.0 - momentum) * bn.running_var[c] + momentum * stats.var[c] * unbias;
                }
            }
        }
    }

    /// Sets running statistics to the batch statistics of `cache` exactly.
    pub fn set_running_stats(&mut self, cache: &ForwardCache) {
        for (norm, layer) in self.norms.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(stats)) = (norm.as_mut(), layer.norm.as_ref()) {
                bn.running_mean.clone_from(&stats.mean);
                bn.running_var.clone_from(&stats.var);
            }
        }
    }

    /// Named tensors for the parameter container.
    pub fn to_entries(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (layer, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            let name = LAYER_NAMES[layer];
            let t = |dims: Vec<usize>, v: &Vec<f64>| Tensor::from_f64(dims, v.clone()).unwrap();
            out.push((
                format!("{name}.weight"),
                t(vec![conv.ksize, conv.ksize, conv.cin, conv.cout], &conv.weight),
            ));
            out.push((format!("{name}.bias"), t(vec![conv.cout], &conv.bias)));
            if let Some(bn) = norm {
                let c = bn.gamma.len();
                out.push((format!("{name}.bn.gamma"), t(vec![c], &bn.gamma)));
                out.push((format!("{name}.bn.beta"), t(vec![c], &bn.beta)));
                out.push((format!("{name}.bn.running_mean"), t(vec![c], &bn.running_mean)));
                out.push((format!("{name}.bn.running_var"), t(vec![c], &bn.running_var)));
            }
        }
        out
    }

    /// Rebuilds parameters from named tensors; the configuration is inferred
    /// from the tensor shapes.
    pub fn from_entries(entries: &[(String, Tensor)]) -> Result<Self> {
        let find = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
        };
        let need = |name: String| find(&name).ok_or(DecoderError::MissingParam(name));
        let mut convs = Vec::with_capacity(5);
        let mut norms = Vec::with_capacity(5);
        for (layer, name) in LAYER_NAMES.iter().enumerate() {
            let w = need(format!("{name}.weight"))?;
            let ksize = KERNEL_SIZES[layer];
            let (cin, cout) = match w.dims() {
                &[a, b, cin, cout] if a == ksize && b == ksize => (cin, cout),
                other => {
                    return Err(shape_err(
                        format!("{name}.weight [{ksize}, {ksize}, cin, cout]"),
                        format!("{other:?}"),
                    ))
                }
            };
            let vector = |t: &Tensor, len: usize, what: &str| -> Result<Vec<f64>> {
                if t.dims() != [len] {
                    return Err(shape_err(format!("{what} [{len}]"), format!("{:?}", t.dims())));
                }
                Ok(t.to_f64())
            };
            let bias = vector(need(format!("{name}.bias"))?, cout, "bias")?;
            convs.push(ConvLayer {
                ksize,
                cin,
                cout,
                weight: w.to_f64(),
                bias,
            });
            norms.push(match find(&format!("{name}.bn.gamma")) {
                Some(g) => Some(BatchNorm {
                    gamma: vector(g, cin, "bn.gamma")?,
                    beta: vector(need(format!("{name}.bn.beta"))?, cin, "bn.beta")?,
                    running_mean: vector(need(format!("{name}.bn.running_mean"))?, cin, "bn.running_mean")?,
                    running_var: vector(need(format!("{name}.bn.running_var"))?, cin, "bn.running_var")?,
                }),
                None => None,
            });
        }
        for l in 1..5 {
            if convs[l].cin != convs[l - 1].cout {
                return Err(shape_err(
                    format!("{} input channels {}", LAYER_NAMES[l], convs[l - 1].cout),
                    convs[l].cin.to_string(),
                ));
            }
        }
        let config = DecoderConfig {
            in_channels: convs[0].cin,
            widths: [convs[0].cout, convs[1].cout, convs[2].cout, convs[3].cout, convs[4].cout],
            batch_norm: norms[0].is_some(),
            norm_before_pos_map: norms[4].is_some(),
        };
        config.validate()?;
        if (0..5).any(|l| config.has_norm(l) != norms[l].is_some()) {
            return Err(DecoderError::InvalidWidths(
                "normalization must precede every layer or none".into(),
            ));
        }
        Ok(Self {
            config,
            convs,
            norms,
            version: 0,
        })
    }
}

/// Gradients with the same layout as [`DecoderParams::learnable`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderGrads {
    pub blocks: Vec<(ParamKind, Vec<f64>)>,
}

impl DecoderGrads {
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|(_, b)| b.iter().all(|&v| v == 0.0))
    }
}

#[derive(Clone, Debug)]
struct NormStats {
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_std: Vec<f64>,
    count: usize,
    /// normalized inputs, per sample
    xhat: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    in_h: usize,
    in_w: usize,
    norm: Option<NormStats>,
    /// convolution inputs (after normalization), per sample
    conv_in: Vec<Vec<f64>>,
    /// convolution outputs before the activation, per sample
    pre_act: Vec<Vec<f64>>,
}

/// Activations retained by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    input_dims: [usize; 3],
    out_dims: [usize; 3],
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn output_dims(&self) -> [usize; 3] {
        self.out_dims
    }

    /// Smallest distance of any leaky-ReLU input from the kink at zero.
    pub fn min_abs_preactivation(&self) -> f64 {
        let leaky_layers = self.layers.len().saturating_sub(1);
        self.layers[..leaky_layers]
            .iter()
            .flat_map(|l| l.pre_act.iter().flatten())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn conv_forward(x: &[f64], h: usize, w: usize, conv: &ConvLayer) -> Vec<f64> {
    let (ks, cin, cout) = (conv.ksize, conv.cin, conv.cout);
    let (oh, ow) = (h + 1 - ks, w + 1 - ks);
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            o.copy_from_slice(&conv.bias);
            for ky in 0..ks {
                for kx in 0..ks {
                    let at = ((oy + ky) * w + ox + kx) * cin;
                    let xin = &x[at..at + cin];
                    let wk = &conv.weight[(ky * ks + kx) * cin * cout..(ky * ks + kx + 1) * cin * cout];
                    for (ci, &xv) in xin.iter().enumerate() {
                        let wrow = &wk[ci * cout..(ci + 1) * cout];
                        for (acc, &wv) in o.iter_mut().zip(wrow) {
                            *acc += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates kernel and bias gradients into `dw`, `db` and returns the
/// input gradient.
fn conv_backward(
    x: &[f64],
    h: usize,
    w: usize,
    conv: &ConvLayer,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let (ks, cin, cout) = (conv.ksize, conv.cin, conv.cout);
    let (oh, ow) = (h + 1 - ks, w + 1 - ks);
    let mut dx = vec![0.0; h * w * cin];
    for oy in 0..oh {
        for ox in 0..ow {
            let g = &dout[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            for (b, &gv) in db.iter_mut().zip(g) {
                *b += gv;
            }
            for ky in 0..ks {
                for kx in 0..ks {
                    let at = ((oy + ky) * w + ox + kx) * cin;
                    let base = (ky * ks + kx) * cin * cout;
                    for ci in 0..cin {
                        let xv = x[at + ci];
                        let wrow = &conv.weight[base + ci * cout..base + (ci + 1) * cout];
                        let dwrow = &mut dw[base + ci * cout..base + (ci + 1) * cout];
                        let mut acc = 0.0;
                        for co in 0..cout {
                            dwrow[co] += xv * g[co];
                            acc += wrow[co] * g[co];
                        }
                        dx[at + ci] += acc;
                    }
                }
            }
        }
    }
    dx
}

fn check_batch(params: &DecoderParams, batch: &[FeatureTensor]) -> Result<[usize; 3]> {
    let first = batch.first().ok_or(DecoderError::EmptyBatch)?;
    let dims = first.dims();
    if dims[2] != params.config.in_channels {
        return Err(shape_err(
            format!("{} input channels", params.config.in_channels),
            format!("{dims:?}"),
        ));
    }
    if dims[0] < SHRINK + 1 || dims[1] < SHRINK + 1 {
        return Err(shape_err(
            format!("spatial size at least {}", SHRINK + 1),
            format!("{dims:?}"),
        ));
    }
    if let Some(bad) = batch.iter().find(|x| x.dims() != dims) {
        return Err(shape_err(format!("{dims:?}"), format!("{:?}", bad.dims())));
    }
    Ok(dims)
}

/// Inference with frozen running statistics.
pub fn forward_eval(params: &DecoderParams, batch: &[FeatureTensor]) -> Result<Vec<FeatureTensor>> {
    let dims = check_batch(params, batch)?;
    Ok(batch
        .par_iter()
        .map(|x| {
            let (mut h, mut w) = (dims[0], dims[1]);
            let mut act = x.values.clone();
            for (layer, (conv, norm)) in params.convs.iter().zip(&params.norms).enumerate() {
                if let Some(bn) = norm {
                    let c = conv.cin;
                    let scale: Vec<f64> = (0..c)
                        .map(|i| bn.gamma[i] / (bn.running_var[i] + BN_EPS).sqrt())
                        .collect();
                    for px in act.chunks_mut(c) {
                        for i in 0..c {
                            px[i] = scale[i] * (px[i] - bn.running_mean[i]) + bn.beta[i];
                        }
                    }
                }
                act = conv_forward(&act, h, w, conv);
                h = h + 1 - conv.ksize;
                w = w + 1 - conv.ksize;
                if layer < 4 {
                    act.iter_mut().for_each(|v| *v = leaky(*v));
                }
            }
            FeatureTensor {
                height: h,
                width: w,
                channels: params.config.widths[4],
                values: act,
            }
        })
        .collect())
}

/// Score map of a plain `14 x 14` glimpse feature tensor.
pub fn score_map(params: &DecoderParams, x: &FeatureTensor) -> Result<PositionScoreMap> {
    if x.height != INPUT_SIDE || x.width != INPUT_SIDE {
        return Err(shape_err(
            format!("{INPUT_SIDE}x{INPUT_SIDE} features"),
            format!("{:?}", x.dims()),
        ));
    }
    forward_eval(params, std::slice::from_ref(x))?
        .pop()
        .expect("one output per input")
        .into_position_map()
}

/// Padded score map of an enlarged `16 x 16` glimpse feature tensor.
pub fn padded_score_map(params: &DecoderParams, x: &FeatureTensor) -> Result<PaddedScoreMap> {
    if x.height != PADDED_INPUT_SIDE || x.width != PADDED_INPUT_SIDE {
        return Err(shape_err(
            format!("{PADDED_INPUT_SIDE}x{PADDED_INPUT_SIDE} features"),
            format!("{:?}", x.dims()),
        ));
    }
    forward_eval(params, std::slice::from_ref(x))?
        .pop()
        .expect("one output per input")
        .into_padded_map()
}

/// Training forward pass: normalization uses statistics over the whole
/// batch and all spatial positions.
pub fn forward_train(
    params: &DecoderParams,
    batch: &[FeatureTensor],
) -> Result<(Vec<FeatureTensor>, ForwardCache)> {
    let dims = check_batch(params, batch)?;
    let (mut h, mut w) = (dims[0], dims[1]);
    let mut acts: Vec<Vec<f64>> = batch.iter().map(|x| x.values.clone()).collect();
    let mut layers = Vec::with_capacity(5);
    for (layer, (conv, norm)) in params.convs.iter().zip(&params.norms).enumerate() {
        let c = conv.cin;
        let (conv_in, stats) = match norm {
            Some(bn) => {
                let count = acts.len() * h * w;
                let mut mean = vec![0.0; c];
                for a in &acts {
                    for px in a.chunks(c) {
                        for i in 0..c {
                            mean[i] += px[i];
                        }
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0; c];
                for a in &acts {
                    for px in a.chunks(c) {
                        for i in 0..c {
                            let d = px[i] - mean[i];
                            var[i] += d * d;
                        }
                    }
                }
                var.iter_mut().for_each(|v| *v /= count as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let xhat: Vec<Vec<f64>> = acts
                    .iter()
                    .map(|a| {
                        let mut out = a.clone();
                        for px in out.chunks_mut(c) {
                            for i in 0..c {
                                px[i] = (px[i] - mean[i]) * inv_std[i];
                            }
                        }
                        out
                    })
                    .collect();
                let normed = xhat
                    .iter()
                    .map(|xh| {
                        let mut out = xh.clone();
                        for px in out.chunks_mut(c) {
                            for i in 0..c {
                                px[i] = bn.gamma[i] * px[i] + bn.beta[i];
                            }
                        }
                        out
                    })
                    .collect();
                (
                    normed,
                    Some(NormStats {
                        mean,
                        var,
                        inv_std,
                        count,
                        xhat,
                    }),
                )
            }
            None => (std::mem::take(&mut acts), None),
        };
        let pre_act: Vec<Vec<f64>> = conv_in
            .par_iter()
            .map(|x| conv_forward(x, h, w, conv))
            .collect();
        acts = if layer < 4 {
            pre_act
                .iter()
                .map(|z| z.iter().map(|&v| leaky(v)).collect())
                .collect()
        } else {
            pre_act.clone()
        };
        layers.push(LayerCache {
            in_h: h,
            in_w: w,
            norm: stats,
            conv_in,
            pre_act,
        });
        h = h + 1 - conv.ksize;
        w = w + 1 - conv.ksize;
    }
    let out_dims = [h, w, params.config.widths[4]];
    let outputs = acts
        .into_iter()
        .map(|values| FeatureTensor {
            height: h,
            width: w,
            channels: out_dims[2],
            values,
        })
        .collect();
    Ok((
        outputs,
        ForwardCache {
            version: params.version,
            batch: batch.len(),
            input_dims: dims,
            out_dims,
            layers,
        },
    ))
}

/// Backpropagates per-sample output gradients through a train-mode pass.
/// Returns parameter gradients (summed over the batch) and input gradients.
pub fn backward(
    params: &DecoderParams,
    cache: &ForwardCache,
    upstream: &[Vec<f64>],
) -> Result<(DecoderGrads, Vec<FeatureTensor>)> {
    if cache.version != params.version {
        return Err(DecoderError::StaleCache);
    }
    let out_len = cache.out_dims.iter().product::<usize>();
    if upstream.len() != cache.batch || upstream.iter().any(|g| g.len() != out_len) {
        return Err(shape_err(
            format!("{} gradients of {:?}", cache.batch, cache.out_dims),
            format!("{} gradients", upstream.len()),
        ));
    }
    let mut grads: Vec<Vec<(ParamKind, Vec<f64>)>> = Vec::with_capacity(5);
    let mut delta: Vec<Vec<f64>> = upstream.to_vec();
    for layer in (0..5).rev() {
        let conv = &params.convs[layer];
        let lc = &cache.layers[layer];
        if layer < 4 {
            for (d, z) in delta.iter_mut().zip(&lc.pre_act) {
                for (dv, &zv) in d.iter_mut().zip(z) {
                    *dv *= leaky_grad(zv);
                }
            }
        }
        let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = lc
            .conv_in
            .par_iter()
            .zip(delta.par_iter())
            .map(|(x, d)| {
                let mut dw = vec![0.0; conv.weight.len()];
                let mut db = vec![0.0; conv.cout];
                let dx = conv_backward(x, lc.in_h, lc.in_w, conv, d, &mut dw, &mut db);
                (dw, db, dx)
            })
            .collect();
        let mut dw = vec![0.0; conv.weight.len()];
        let mut db = vec![0.0; conv.cout];
        let mut dxs = Vec::with_capacity(per_sample.len());
        for (sdw, sdb, sdx) in per_sample {
            dw.iter_mut().zip(&sdw).for_each(|(a, b)| *a += b);
            db.iter_mut().zip(&sdb).for_each(|(a, b)| *a += b);
            dxs.push(sdx);
        }
        let mut block = vec![(ParamKind::Kernel, dw), (ParamKind::Bias, db)];
        if let (Some(bn), Some(stats)) = (&params.norms[layer], &lc.norm) {
            let c = conv.cin;
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for (dy, xh) in dxs.iter().zip(&stats.xhat) {
                for (g, x) in dy.chunks(c).zip(xh.chunks(c)) {
                    for i in 0..c {
                        dgamma[i] += g[i] * x[i];
                        dbeta[i] += g[i];
                    }
                }
            }
            let n = stats.count as f64;
            for (dy, xh) in dxs.iter_mut().zip(&stats.xhat) {
                for (g, x) in dy.chunks_mut(c).zip(xh.chunks(c)) {
                    for i in 0..c {
                        g[i] = bn.gamma[i] * stats.inv_std[i] / n
                            * (n * g[i] - dbeta[i] - x[i] * dgamma[i]);
                    }
                }
            }
            block.push((ParamKind::NormScale, dgamma));
            block.push((ParamKind::NormShift, dbeta));
        }
        grads.push(block);
        delta = dxs;
    }
    // layers were visited last-to-first
    let blocks = grads
        .into_iter()
        .rev()
        .flatten()
        .collect();
    let [h, w, c] = cache.input_dims;
    let inputs = delta
        .into_iter()
        .map(|values| FeatureTensor {
            height: h,
            width: w,
            channels: c,
            values,
        })
        .collect();
    Ok((DecoderGrads { blocks }, inputs))
}
