//! The scoring path from glimpse features (or ERP frames) to scored views.

use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use serde::Serialize;

use viewscore::decoder::{forward_eval, DecoderParams, FeatureTensor};
use viewscore::features::{feature_side, glimpse_features, FeatureExtractor};
use viewscore::metrics::GridKind;
use viewscore::scoremap::{
    stitch_sphere_map, PoolingKernel, SphereScoreMap, WindowCandidate, WindowScanner,
};
use viewscore::sphere_geom::{glimpse_grid, ErpFrame, Glimpse};

/// Wall time spent in each stage of one segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub features: Duration,
    pub decode: Duration,
    pub stitch: Duration,
    pub search: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.features + self.decode + self.stitch + self.search
    }

    pub fn add(&mut self, other: &StageTimes) {
        self.features += other.features;
        self.decode += other.decode;
        self.stitch += other.stitch;
        self.search += other.search;
    }
}

/// Decoder plus the precomputed pooling and window tables of one config.
pub struct Scorer {
    params: DecoderParams,
    kernel: PoolingKernel,
    scanner: WindowScanner,
}

impl Scorer {
    pub fn new(params: DecoderParams, scales: &[f64], h: f64) -> Result<Self> {
        let k = params.k();
        Ok(Self {
            kernel: PoolingKernel::new(k, h)?,
            scanner: WindowScanner::new(k, scales, h)?,
            params,
        })
    }

    pub fn params(&self) -> &DecoderParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.params.k()
    }

    /// Decodes the twelve enlarged-glimpse feature tensors of one segment,
    /// in sphere-grid order, and stitches them into a sphere score map.
    pub fn sphere_map(&self, features: &[FeatureTensor]) -> Result<SphereScoreMap> {
        self.sphere_map_timed(features, &mut StageTimes::default())
    }

    fn sphere_map_timed(&self, features: &[FeatureTensor], times: &mut StageTimes) -> Result<SphereScoreMap> {
        let grid = glimpse_grid();
        ensure!(
            features.len() == grid.len(),
            "expected {} glimpse feature tensors, got {}",
            grid.len(),
            features.len()
        );
        let t = Instant::now();
        let outs = forward_eval(&self.params, features)?;
        times.decode += t.elapsed();
        let t = Instant::now();
        let maps = grid
            .into_iter()
            .zip(outs)
            .map(|(g, o)| Ok((g, o.into_padded_map()?)))
            .collect::<Result<Vec<_>>>()?;
        let s = stitch_sphere_map(&maps)?;
        times.stitch += t.elapsed();
        Ok(s)
    }

    /// Every window of the scan set with its score, in scan order.
    pub fn candidates(&self, s: &SphereScoreMap) -> Result<Vec<WindowCandidate>> {
        Ok(self.scanner.scan(s)?)
    }

    /// Full sphere-grid path from an ERP frame.
    pub fn frame_candidates(
        &self,
        frame: &ErpFrame,
        extractor: &dyn FeatureExtractor,
    ) -> Result<(Vec<WindowCandidate>, StageTimes)> {
        let mut times = StageTimes::default();
        let t = Instant::now();
        let features = grid_features(frame, GridKind::Cvs, self.k(), extractor)?;
        times.features = t.elapsed();
        let s = self.sphere_map_timed(&features, &mut times)?;
        let t = Instant::now();
        let c = self.candidates(&s)?;
        times.search = t.elapsed();
        Ok((c, times))
    }

    /// Dense-grid path from an ERP frame: every plain glimpse is decoded and
    /// pooled on its own.
    pub fn dense_frame_candidates(
        &self,
        frame: &ErpFrame,
        extractor: &dyn FeatureExtractor,
    ) -> Result<(Vec<WindowCandidate>, StageTimes)> {
        let mut times = StageTimes::default();
        let grid = GridKind::Dense.glimpses();
        let t = Instant::now();
        let features = grid_features(frame, GridKind::Dense, self.k(), extractor)?;
        times.features = t.elapsed();
        let t = Instant::now();
        let outs = forward_eval(&self.params, &features)?;
        times.decode = t.elapsed();
        let t = Instant::now();
        let c = grid
            .iter()
            .zip(outs)
            .map(|(g, o)| {
                let score = self.kernel.pool(&o.into_position_map()?)?;
                Ok(WindowCandidate::new(g.center, g.hfov, score)?)
            })
            .collect::<Result<Vec<_>>>()?;
        times.search = t.elapsed();
        Ok((c, times))
    }
}

/// Feature tensors of every glimpse of a grid, in grid order.
pub fn grid_features(
    frame: &ErpFrame,
    grid: GridKind,
    k: usize,
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<FeatureTensor>> {
    let enlarged = grid == GridKind::Cvs;
    let side = feature_side(k, enlarged);
    let enlarge = grid.enlarge(k);
    grid.glimpses()
        .iter()
        .map(|g: &Glimpse| Ok(glimpse_features(frame, g, side, enlarge, extractor)?))
        .collect()
}
