//! Max-margin ranking losses, the SGD trainer for the decoder, and a
//! synthetic triplet generator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decoder::{
    backward, forward_eval, forward_train, DecoderError, DecoderGrads, DecoderParams,
    FeatureTensor, ForwardCache, BN_MOMENTUM,
};
use crate::scoremap::{PoolingKernel, PositionScoreMap, ScoreMapError, DEFAULT_BANDWIDTH};

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_LR_HALVE_EVERY: usize = 8;
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum RankingError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("triplet members have different dims: {0:?}")]
    DimsMismatch(Vec<[usize; 3]>),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    ScoreMap(#[from] ScoreMapError),
}

pub type Result<T, E = RankingError> = std::result::Result<T, E>;

fn hinge(z: f64) -> f64 {
    z.max(0.0)
}

/// Subgradient of the hinge, 0 at the kink.
fn hinge_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `alpha * max(0, fc - fp + 1) + (1 - alpha) * max(0, fn - fc + 1)`
pub fn triplet_loss(fp: f64, fc: f64, fn_: f64, alpha: f64) -> f64 {
    alpha * hinge(fc - fp + 1.0) + (1.0 - alpha) * hinge(fn_ - fc + 1.0)
}

/// Partial derivatives of [`triplet_loss`] with respect to `(fp, fc, fn)`.
pub fn triplet_loss_grad(fp: f64, fc: f64, fn_: f64, alpha: f64) -> [f64; 3] {
    let a = alpha * hinge_grad(fc - fp + 1.0);
    let b = (1.0 - alpha) * hinge_grad(fn_ - fc + 1.0);
    [-a, a - b, b]
}

/// `max(0, fn - fp + 1)`
pub fn pairwise_loss(fp: f64, fn_: f64) -> f64 {
    hinge(fn_ - fp + 1.0)
}

/// Sum of per-sample losses plus `lambda` times the squared norm of all
/// kernels and biases.
pub fn total_objective(losses: &[f64], params: &DecoderParams, lambda: f64) -> f64 {
    losses.iter().sum::<f64>() + lambda * params.l2_norm_sq()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Triplet,
    /// Professional and casual each ranked against the random sample, with
    /// no constraint between professional and casual.
    Pairwise,
}

impl LossKind {
    pub fn loss(self, f: [f64; 3], alpha: f64) -> f64 {
        match self {
            LossKind::Triplet => triplet_loss(f[0], f[1], f[2], alpha),
            LossKind::Pairwise => 0.5 * (pairwise_loss(f[0], f[2]) + pairwise_loss(f[1], f[2])),
        }
    }

    pub fn grad(self, f: [f64; 3], alpha: f64) -> [f64; 3] {
        match self {
            LossKind::Triplet => triplet_loss_grad(f[0], f[1], f[2], alpha),
            LossKind::Pairwise => {
                let a = 0.5 * hinge_grad(f[2] - f[0] + 1.0);
                let b = 0.5 * hinge_grad(f[2] - f[1] + 1.0);
                [-a, -b, a + b]
            }
        }
    }
}

/// One professional / casual / random training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub p: FeatureTensor,
    pub c: FeatureTensor,
    pub n: FeatureTensor,
}

impl Triplet {
    pub fn new(p: FeatureTensor, c: FeatureTensor, n: FeatureTensor) -> Result<Self> {
        if p.dims() != c.dims() || p.dims() != n.dims() {
            return Err(RankingError::DimsMismatch(vec![p.dims(), c.dims(), n.dims()]));
        }
        Ok(Self { p, c, n })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.p.dims()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bandwidth: f64,
    pub loss: LossKind,
    /// Re-pair the three pools independently every epoch.
    pub cross_pair: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
            lr: DEFAULT_LR,
            lr_halve_every: DEFAULT_LR_HALVE_EVERY,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 50,
            seed: 0,
            bandwidth: DEFAULT_BANDWIDTH,
            loss: LossKind::Triplet,
            cross_pair: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RankingError::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if self.lr_halve_every == 0 {
            return bad("lr_halve_every must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * 0.5f64.powi((epoch / self.lr_halve_every) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: DecoderParams,
    pub history: Vec<EpochRecord>,
}

/// Value and gradient of the objective on one mini-batch, evaluated in
/// train mode (batch statistics over all `3B` samples).
#[derive(Clone, Debug)]
pub struct BatchObjective {
    /// per-triplet losses
    pub losses: Vec<f64>,
    /// pooled `[professional, casual, random]` scores per triplet
    pub scores: Vec<[f64; 3]>,
    pub objective: f64,
    pub grads: DecoderGrads,
    pub cache: ForwardCache,
}

fn pooled(kernel: &PoolingKernel, out: &FeatureTensor) -> Result<f64> {
    let map = PositionScoreMap::from_shape(&out.dims(), out.values().to_vec())?;
    Ok(kernel.pool(&map)?)
}

/// Forward and backward over `triplets` as one normalization batch.
pub fn batch_objective(
    params: &DecoderParams,
    triplets: &[&Triplet],
    cfg: &TrainConfig,
) -> Result<BatchObjective> {
    let b = triplets.len();
    if b == 0 {
        return Err(RankingError::EmptyDataset);
    }
    let kernel = PoolingKernel::new(params.k(), cfg.bandwidth)?;
    let mut samples = Vec::with_capacity(3 * b);
    samples.extend(triplets.iter().map(|t| t.p.clone()));
    samples.extend(triplets.iter().map(|t| t.c.clone()));
    samples.extend(triplets.iter().map(|t| t.n.clone()));
    let (outs, cache) = forward_train(params, &samples)?;
    let scores = outs
        .iter()
        .map(|o| pooled(&kernel, o))
        .collect::<Result<Vec<_>>>()?;
    let mut losses = Vec::with_capacity(b);
    let mut triples = Vec::with_capacity(b);
    let mut dscore = vec![0.0; 3 * b];
    for i in 0..b {
        let f = [scores[i], scores[b + i], scores[2 * b + i]];
        triples.push(f);
        losses.push(cfg.loss.loss(f, cfg.alpha));
        let g = cfg.loss.grad(f, cfg.alpha);
        dscore[i] = g[0];
        dscore[b + i] = g[1];
        dscore[2 * b + i] = g[2];
    }
    let weights = kernel.gradient();
    let upstream: Vec<Vec<f64>> = dscore
        .iter()
        .map(|&d| weights.iter().map(|w| d * w).collect())
        .collect();
    let (mut grads, _) = backward(params, &cache, &upstream)?;
    if cfg.lambda != 0.0 {
        for ((kind, g), (_, p)) in grads.blocks.iter_mut().zip(params.learnable()) {
            if kind.regularized() {
                for (gv, pv) in g.iter_mut().zip(p) {
                    *gv += 2.0 * cfg.lambda * pv;
                }
            }
        }
    }
    let objective = total_objective(&losses, params, cfg.lambda);
    Ok(BatchObjective {
        losses,
        scores: triples,
        objective,
        grads,
        cache,
    })
}

fn sgd_step(params: &mut DecoderParams, grads: &DecoderGrads, lr: f64) {
    if lr == 0.0 {
        return;
    }
    for ((_, p), (_, g)) in params.learnable_mut().into_iter().zip(&grads.blocks) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
}

/// Mini-batch SGD over `data` for `cfg.epochs` epochs.
pub fn train(data: &[Triplet], cfg: &TrainConfig, init: DecoderParams) -> Result<TrainOutcome> {
    train_with(data, cfg, init, |_, _, _| true)
}

/// Like [`train`], calling `after_epoch(epoch, record, params)` at the end of
/// every epoch; returning `false` stops training early.
pub fn train_with<F>(
    data: &[Triplet],
    cfg: &TrainConfig,
    init: DecoderParams,
    mut after_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &EpochRecord, &DecoderParams) -> bool,
{
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(RankingError::EmptyDataset);
    }
    let dims = data[0].dims();
    if let Some(bad) = data.iter().find(|t| t.dims() != dims) {
        return Err(RankingError::DimsMismatch(vec![dims, bad.dims()]));
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order: Vec<[usize; 3]> = if cfg.cross_pair {
            let mut pools: [Vec<usize>; 3] = [(0..n).collect(), (0..n).collect(), (0..n).collect()];
            for pool in pools.iter_mut() {
                pool.shuffle(&mut rng);
            }
            (0..n).map(|i| [pools[0][i], pools[1][i], pools[2][i]]).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.into_iter().map(|i| [i, i, i]).collect()
        };
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // batch membership is random; the order inside a batch is canonical
            let mut chunk = chunk.to_vec();
            chunk.sort_unstable();
            let assembled: Vec<Triplet> = chunk
                .iter()
                .map(|&[p, c, m]| Triplet {
                    p: data[p].p.clone(),
                    c: data[c].c.clone(),
                    n: data[m].n.clone(),
                })
                .collect();
            let refs: Vec<&Triplet> = assembled.iter().collect();
            let step = batch_objective(&params, &refs, cfg)?;
            let batch_loss: f64 = step.losses.iter().sum();
            if !step.objective.is_finite() || !batch_loss.is_finite() {
                return Err(RankingError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    value: step.objective,
                });
            }
            loss_sum += batch_loss;
            params.update_running_stats(&step.cache, BN_MOMENTUM);
            sgd_step(&mut params, &step.grads, lr);
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n as f64,
            lr,
        };
        history.push(record.clone());
        if !after_epoch(epoch, &record, &params) {
            break;
        }
    }
    Ok(TrainOutcome { params, history })
}

/// Eval-mode composition scores of a batch of feature tensors.
pub fn score_features(params: &DecoderParams, xs: &[FeatureTensor], h: f64) -> Result<Vec<f64>> {
    let kernel = PoolingKernel::new(params.k(), h)?;
    forward_eval(params, xs)?
        .iter()
        .map(|o| pooled(&kernel, o))
        .collect()
}

/// Eval-mode scores `(fp, fc, fn)` of every triplet.
pub fn score_triplets(params: &DecoderParams, data: &[Triplet], h: f64) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(64) {
        let mut xs = Vec::with_capacity(3 * chunk.len());
        for t in chunk {
            xs.extend([t.p.clone(), t.c.clone(), t.n.clone()]);
        }
        let s = score_features(params, &xs, h)?;
        out.extend(s.chunks(3).map(|f| [f[0], f[1], f[2]]));
    }
    Ok(out)
}

/// Fraction of triplets ordered `f(p) > f(c) > f(n)`.
pub fn triplet_accuracy(params: &DecoderParams, data: &[Triplet], h: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(RankingError::EmptyDataset);
    }
    let scores = score_triplets(params, data, h)?;
    Ok(ordered_fraction(&scores))
}

pub fn ordered_fraction(scores: &[[f64; 3]]) -> f64 {
    let ok = scores.iter().filter(|f| f[0] > f[1] && f[1] > f[2]).count();
    ok as f64 / scores.len() as f64
}

/// Generator settings for synthetic triplets.
///
/// Each sample is `q * signal * u + s * content * v + noise * eps`, where
/// `u` and `v` are fixed orthogonal unit directions (spatially uniform
/// channel patterns) drawn from `direction_seed`, `q` is the planted
/// composition quality (class means +1, 0, -1 plus jitter) and `s` a
/// content level (+1, +2, -1 for professional, casual, random).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dims: [usize; 3],
    pub signal: f64,
    pub content: f64,
    pub noise: f64,
    pub direction_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dims: [14, 14, 8],
            signal: 0.05,
            content: 0.2,
            noise: 1.0,
            direction_seed: 0x5eed,
        }
    }
}

pub const CLASS_QUALITY: [f64; 3] = [1.0, 0.0, -1.0];
pub const CLASS_CONTENT: [f64; 3] = [1.0, 2.0, -1.0];
/// Standard deviation of quality jitter per unit of noise.
pub const QUALITY_JITTER: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct SynthSet {
    pub triplets: Vec<Triplet>,
    /// planted quality of `(p, c, n)` per triplet
    pub quality: Vec<[f64; 3]>,
}

impl SynthConfig {
    /// The planted composition direction as a full-size unit vector.
    pub fn quality_direction(&self) -> Vec<f64> {
        self.directions().0
    }

    fn directions(&self) -> (Vec<f64>, Vec<f64>) {
        let [h, w, c] = self.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(self.direction_seed);
        let mut a: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut b: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut a);
        if c > 1 {
            let d: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            b.iter_mut().zip(&a).for_each(|(y, x)| *y -= d * x);
            normalize(&mut b);
        } else {
            b = vec![0.0];
        }
        let spread = |v: &[f64]| -> Vec<f64> {
            let s = 1.0 / ((h * w) as f64).sqrt();
            (0..h * w).flat_map(|_| v.iter().map(move |x| x * s)).collect()
        };
        (spread(&a), spread(&b))
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Deterministic synthetic triplets with planted quality ordering.
pub fn synth_triplets(seed: u64, n: usize, cfg: &SynthConfig) -> SynthSet {
    let (u, v) = cfg.directions();
    let [h, w, c] = cfg.dims;
    let len = h * w * c;
    // scale so the projection on u equals q * signal * sqrt(len)
    let scale = (len as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(n);
    let mut quality = Vec::with_capacity(n);
    for _ in 0..n {
        let mut members = Vec::with_capacity(3);
        let mut q = [0.0; 3];
        for class in 0..3 {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            q[class] = CLASS_QUALITY[class] + QUALITY_JITTER * cfg.noise * jitter;
            let a = q[class] * cfg.signal * scale;
            let b = CLASS_CONTENT[class] * cfg.content * scale;
            let values: Vec<f64> = (0..len)
                .map(|i| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    a * u[i] + b * v[i] + cfg.noise * e
                })
                .collect();
            members.push(FeatureTensor::new(h, w, c, values).expect("finite synthetic values"));
        }
        let nn = members.pop().unwrap();
        let cc = members.pop().unwrap();
        let pp = members.pop().unwrap();
        triplets.push(Triplet { p: pp, c: cc, n: nn });
        quality.push(q);
    }
    SynthSet { triplets, quality }
}
