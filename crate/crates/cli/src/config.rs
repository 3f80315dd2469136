//! Pipeline configuration: a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use viewscore::decoder::DecoderConfig;
use viewscore::metrics::{DEFAULT_MATCH_THRESHOLD, DEFAULT_OVERLAP_SAMPLES, DEFAULT_OVERLAP_SEED};
use viewscore::planner::DEFAULT_MOTION_LIMIT;
use viewscore::ranking::{LossKind, TrainConfig};
use viewscore::scoremap::{normalize_scales, DEFAULT_BANDWIDTH, DEFAULT_K, DEFAULT_SCALES};

pub const WORKSPACE_ENV: &str = "VIEWSCORE_WORKSPACE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: usize,
    pub h: f64,
    pub scales: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub cross_pair: bool,
    pub init_seed: u64,
    pub train_seed: u64,
    pub synth_seed: u64,
    pub overlap_seed: u64,
    pub overlap_samples: usize,
    pub preset: String,
    pub motion_limit: f64,
    /// keep only this many best candidates per segment before stitching
    pub top_m: Option<usize>,
    pub highlights: usize,
    pub match_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            k: DEFAULT_K,
            h: DEFAULT_BANDWIDTH,
            scales: DEFAULT_SCALES.to_vec(),
            alpha: t.alpha,
            lambda: t.lambda,
            lr: t.lr,
            lr_halve_every: t.lr_halve_every,
            batch_size: t.batch_size,
            epochs: t.epochs,
            loss: t.loss,
            cross_pair: t.cross_pair,
            init_seed: 7,
            train_seed: 0,
            synth_seed: 1,
            overlap_seed: DEFAULT_OVERLAP_SEED,
            overlap_samples: DEFAULT_OVERLAP_SAMPLES,
            preset: "desk".into(),
            motion_limit: DEFAULT_MOTION_LIMIT,
            top_m: None,
            highlights: 3,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            lr: self.lr,
            lr_halve_every: self.lr_halve_every,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.train_seed,
            bandwidth: self.h,
            loss: self.loss,
            cross_pair: self.cross_pair,
        }
    }

    pub fn decoder_config(&self) -> Result<DecoderConfig> {
        DecoderConfig::preset(&self.preset, self.k)
            .with_context(|| format!("unknown decoder preset `{}`", self.preset))
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be positive");
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            bail!("h must be positive");
        }
        normalize_scales(&self.scales).context("invalid scales")?;
        self.train_config().validate()?;
        self.decoder_config()?.validate()?;
        if !(self.motion_limit >= 0.0) {
            bail!("motion_limit must be non-negative");
        }
        if self.top_m == Some(0) {
            bail!("top_m must be positive");
        }
        if self.overlap_samples < viewscore::sphere_geom::MIN_MC_SAMPLES {
            bail!(
                "overlap_samples must be at least {}",
                viewscore::sphere_geom::MIN_MC_SAMPLES
            );
        }
        if !(self.match_threshold >= 0.0) {
            bail!("match_threshold must be non-negative");
        }
        Ok(())
    }
}

/// Resolves paths relative to the workspace root.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, p: impl AsRef<Path>) -> PathBuf {
        self.root.join(p)
    }
}
