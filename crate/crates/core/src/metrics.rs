//! Evaluation metrics for view trajectories and highlight lists, and the
//! projection-cost accounting of the glimpse grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::scoremap::DEFAULT_K;
use crate::sphere_geom::{
    angular_distance, dense_glimpse_grid, angle_between, erp_area_fraction, glimpse_grid, solid_angle,
    sphere_samples, Estimate, Footprint, GeomError, Glimpse, Viewpoint, MIN_MC_SAMPLES,
};

/// Spatial match radius for highlight detection, degrees.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 45.0;
pub const DEFAULT_OVERLAP_SAMPLES: usize = MIN_MC_SAMPLES;
pub const DEFAULT_OVERLAP_SEED: u64 = 17;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction covers {pred} segments but ground truth {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("empty prediction")]
    EmptyPrediction,
    #[error("no annotators")]
    NoAnnotators,
    #[error("annotator {0} has an empty highlight set")]
    EmptyHighlightSet(usize),
    #[error("unknown glimpse grid `{0}`")]
    UnknownGrid(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Per-annotator per-segment ground-truth windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub annotators: Vec<Vec<Glimpse>>,
}

fn check_lengths(pred: &[Glimpse], gt: &GroundTruth) -> Result<()> {
    if pred.is_empty() {
        return Err(MetricsError::EmptyPrediction);
    }
    if gt.annotators.is_empty() {
        return Err(MetricsError::NoAnnotators);
    }
    for a in &gt.annotators {
        if a.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                gt: a.len(),
            });
        }
    }
    Ok(())
}

/// Cosine between the principal axes of two viewpoints.
/// Taken through the angle so that identical views give exactly 1.
pub fn view_cosine(a: &Viewpoint, b: &Viewpoint) -> f64 {
    angle_between(a.to_vector(), b.to_vector()).to_radians().cos()
}

/// Per-annotator mean of a per-segment metric.
fn per_annotator<F>(pred: &[Glimpse], gt: &GroundTruth, f: F) -> Result<Vec<f64>>
where
    F: Fn(&Glimpse, &Glimpse) -> f64,
{
    check_lengths(pred, gt)?;
    Ok(gt
        .annotators
        .iter()
        .map(|track| {
            let sum = pred.iter().zip(track).fold(0.0, |acc, (p, g)| acc + f(p, g));
            sum / pred.len() as f64
        })
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn best(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean cosine similarity over all annotator-segment pairs.
pub fn frame_cosine_similarity(pred: &[Glimpse], gt: &GroundTruth) -> Result<f64> {
    Ok(mean(&per_annotator(pred, gt, |p, g| view_cosine(&p.center, &g.center))?))
}

/// Intersection-over-union of window footprints, estimated on a fixed set of
/// uniform sphere samples.
#[derive(Clone, Debug)]
pub struct OverlapEstimator {
    samples: Vec<[f64; 3]>,
}

impl OverlapEstimator {
    pub fn new(n_samples: usize, seed: u64) -> Result<Self> {
        if n_samples < MIN_MC_SAMPLES {
            return Err(GeomError::TooFewSamples(n_samples).into());
        }
        Ok(Self {
            samples: sphere_samples(n_samples, seed).collect(),
        })
    }

    pub fn iou(&self, a: &Glimpse, b: &Glimpse) -> f64 {
        self.footprint_iou(&a.footprint(0.0), &b.footprint(0.0))
    }

    pub fn footprint_iou(&self, a: &Footprint, b: &Footprint) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for q in &self.samples {
            let (ia, ib) = (a.contains(*q), b.contains(*q));
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl Default for OverlapEstimator {
    fn default() -> Self {
        Self::new(DEFAULT_OVERLAP_SAMPLES, DEFAULT_OVERLAP_SEED).expect("default sample count is valid")
    }
}

/// Mean footprint IoU over all annotator-segment pairs.
pub fn frame_overlap(pred: &[Glimpse], gt: &GroundTruth, est: &OverlapEstimator) -> Result<f64> {
    Ok(mean(&per_annotator(pred, gt, |p, g| est.iou(p, g))?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub cosine: f64,
    pub overlap: f64,
}

/// Best-matching annotator's per-trajectory cosine and overlap.
pub fn trajectory_metrics(
    pred: &[Glimpse],
    gt: &GroundTruth,
    est: &OverlapEstimator,
) -> Result<TrajectoryMetrics> {
    let cos = per_annotator(pred, gt, |p, g| view_cosine(&p.center, &g.center))?;
    let ov = per_annotator(pred, gt, |p, g| est.iou(p, g))?;
    Ok(TrajectoryMetrics {
        cosine: best(&cos),
        overlap: best(&ov),
    })
}

/// A highlight as a segment index plus a viewing direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotHighlight {
    pub segment: usize,
    pub view: Viewpoint,
}

/// Average precision of a ranked list against one annotator's set. Each
/// ground-truth entry can be matched once; a prediction takes the nearest
/// unmatched entry on the same segment within `threshold` degrees.
pub fn average_precision(ranked: &[SpotHighlight], gt: &[SpotHighlight], threshold: f64) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let mut used = vec![false; gt.len()];
    let mut hits = 0usize;
    let mut precision_sum = PrecisionSum::default();
    for (r, p) in ranked.iter().enumerate() {
        let mut pick: Option<(f64, usize)> = None;
        for (i, g) in gt.iter().enumerate() {
            if used[i] || g.segment != p.segment {
                continue;
            }
            let d = angular_distance(&p.view, &g.view);
            if d <= threshold && pick.is_none_or(|(bd, _)| d < bd) {
                pick = Some((d, i));
            }
        }
        if let Some((_, i)) = pick {
            used[i] = true;
            hits += 1;
            precision_sum.add(hits as u128, (r + 1) as u128);
        }
    }
    precision_sum.divided_by(gt.len() as u128)
}

/// Sum of precisions kept as a reduced fraction while it fits, so that short
/// lists round only once.
#[derive(Debug)]
enum PrecisionSum {
    Exact(u128, u128),
    Float(f64),
}

impl Default for PrecisionSum {
    fn default() -> Self {
        PrecisionSum::Exact(0, 1)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl PrecisionSum {
    fn value(&self) -> f64 {
        match *self {
            PrecisionSum::Exact(n, d) => n as f64 / d as f64,
            PrecisionSum::Float(v) => v,
        }
    }

    fn add(&mut self, num: u128, den: u128) {
        if let PrecisionSum::Exact(n, d) = *self {
            let g = gcd(d, den);
            let exact = (den / g)
                .checked_mul(n)
                .zip((d / g).checked_mul(num))
                .and_then(|(a, b)| a.checked_add(b))
                .zip((d / g).checked_mul(den));
            if let Some((n2, d2)) = exact {
                let g2 = gcd(n2, d2).max(1);
                *self = PrecisionSum::Exact(n2 / g2, d2 / g2);
                return;
            }
        }
        *self = PrecisionSum::Float(self.value() + num as f64 / den as f64);
    }

    fn divided_by(&self, m: u128) -> f64 {
        match *self {
            PrecisionSum::Exact(n, d) => match d.checked_mul(m) {
                Some(dm) => n as f64 / dm as f64,
                None => self.value() / m as f64,
            },
            PrecisionSum::Float(v) => v / m as f64,
        }
    }
}

/// Ranked predictions and annotator highlight sets of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoHighlights {
    pub predictions: Vec<SpotHighlight>,
    pub annotators: Vec<Vec<SpotHighlight>>,
}

/// AP averaged over annotators, then over videos.
pub fn mean_average_precision(videos: &[VideoHighlights], threshold: f64) -> Result<f64> {
    if videos.is_empty() {
        return Err(MetricsError::EmptyPrediction);
    }
    let mut per_video = Vec::with_capacity(videos.len());
    for v in videos {
        if v.predictions.is_empty() {
            return Err(MetricsError::EmptyPrediction);
        }
        if v.annotators.is_empty() {
            return Err(MetricsError::NoAnnotators);
        }
        if let Some(a) = v.annotators.iter().position(Vec::is_empty) {
            return Err(MetricsError::EmptyHighlightSet(a));
        }
        let aps: Vec<f64> = v
            .annotators
            .iter()
            .map(|gt| average_precision(&v.predictions, gt, threshold))
            .collect();
        per_video.push(mean(&aps));
    }
    Ok(mean(&per_video))
}

/// Which glimpse layout to account for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// 12 enlarged glimpses on three latitude tiers
    Cvs,
    /// 18 longitudes by 11 latitudes of plain glimpses
    Dense,
}

impl std::str::FromStr for GridKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvs" => Ok(GridKind::Cvs),
            "dense" => Ok(GridKind::Dense),
            other => Err(MetricsError::UnknownGrid(other.into())),
        }
    }
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Cvs => "cvs",
            GridKind::Dense => "dense",
        }
    }

    pub fn glimpses(self) -> Vec<Glimpse> {
        match self {
            GridKind::Cvs => glimpse_grid(),
            GridKind::Dense => dense_glimpse_grid(),
        }
    }

    /// Relative enlargement of each projected glimpse: one bin on each side
    /// for the sphere grid, none for the dense grid.
    pub fn enlarge(self, k: usize) -> f64 {
        match self {
            GridKind::Cvs => 1.0 / k as f64,
            GridKind::Dense => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSettings {
    pub k: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// rows of the equirectangular grid used for the pixel model
    pub erp_rows: usize,
}

impl Default for CostSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            mc_samples: MIN_MC_SAMPLES,
            seed: 11,
            erp_rows: 360,
        }
    }
}

/// Total projected area of a grid as a multiple of the full sphere, under
/// three accounting models. Overlapping glimpses are counted once each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub grid: GridKind,
    pub projections: usize,
    pub enlarge: f64,
    /// sum of spherical solid angles over 4 pi (Monte Carlo)
    pub solid_angle: Estimate,
    /// sum of covered equirectangular pixel fractions
    pub erp_pixels: f64,
    /// sum of tangent-plane rectangle areas over 4 pi
    pub tangent_plane: f64,
}

pub fn cost_report(grid: GridKind, settings: &CostSettings) -> Result<CostReport> {
    let glimpses = grid.glimpses();
    let enlarge = grid.enlarge(settings.k);
    let mut value = 0.0;
    let mut var = 0.0;
    let mut erp = 0.0;
    let mut plane = 0.0;
    for (i, g) in glimpses.iter().enumerate() {
        let e = solid_angle(g, enlarge, settings.mc_samples, settings.seed.wrapping_add(i as u64))?;
        value += e.value;
        var += e.std_error * e.std_error;
        erp += erp_area_fraction(&g.footprint(enlarge), settings.erp_rows);
        let (tu, tv) = g.half_extents(enlarge);
        plane += 4.0 * tu * tv;
    }
    let sphere = 4.0 * PI;
    Ok(CostReport {
        grid,
        projections: glimpses.len(),
        enlarge,
        solid_angle: Estimate {
            value: value / sphere,
            std_error: var.sqrt() / sphere,
        },
        erp_pixels: erp,
        tangent_plane: plane / sphere,
    })
}
