//! Deterministic synthetic inputs: ERP videos with moving subjects and
//! feature-tensor triplet sets.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viewscore::features::{FeatureExtractor, PatchStats};
use viewscore::io_formats::{
    write_json, write_pnm, write_tensor, GlimpseFeature, SegmentEntry, TripletEntry,
    TripletManifest, VideoManifest, DEFAULT_FPS, SEGMENT_SECONDS,
};
use viewscore::metrics::GridKind;
use viewscore::raster::Raster;
use viewscore::ranking::{synth_triplets, SynthConfig};
use viewscore::sphere_geom::{glimpse_grid, ErpFrame, Viewpoint};

use crate::pipeline::grid_features;

#[derive(Clone, Copy, Debug)]
struct Subject {
    theta: f64,
    phi: f64,
    /// degrees of longitude per segment
    drift: f64,
    radius: f64,
    colour: [f32; 3],
}

/// A procedurally generated 360-degree scene.
#[derive(Clone, Debug)]
pub struct SynthScene {
    subjects: Vec<Subject>,
    width: usize,
    height: usize,
}

impl SynthScene {
    pub fn new(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects = (0..4)
            .map(|_| Subject {
                theta: rng.random_range(-40.0..40.0),
                phi: rng.random_range(0.0..360.0),
                drift: rng.random_range(-12.0..12.0),
                radius: rng.random_range(8.0..20.0),
                colour: [rng.random(), rng.random(), rng.random()],
            })
            .collect();
        Self {
            subjects,
            width,
            height,
        }
    }

    /// Key frame of segment `t`.
    pub fn frame(&self, t: usize) -> Raster {
        let (w, h) = (self.width, self.height);
        let centers: Vec<([f64; 3], f64, [f32; 3])> = self
            .subjects
            .iter()
            .map(|s| {
                let c = Viewpoint::new(s.theta, s.phi + s.drift * t as f64)
                    .expect("subject latitudes are in range");
                (c.to_vector(), s.radius.to_radians(), s.colour)
            })
            .collect();
        let mut out = Raster::new(w, h, 3);
        for row in 0..h {
            let theta = 90.0 - (row as f64 + 0.5) * 180.0 / h as f64;
            let (st, ct) = theta.to_radians().sin_cos();
            for col in 0..w {
                let phi = (col as f64 + 0.5) * 360.0 / w as f64 - 180.0;
                let (sp, cp) = phi.to_radians().sin_cos();
                let q = [ct * cp, ct * sp, st];
                let sky = (0.5 + 0.5 * st) as f32;
                let texture = (0.05 * (8.0 * phi.to_radians()).sin() * (4.0 * theta.to_radians()).cos()) as f32;
                let mut px = [0.3 * sky + 0.1 + texture, 0.4 * sky + 0.15 + texture, 0.7 * sky + 0.1];
                for (c, radius, colour) in &centers {
                    let d = (q[0] * c[0] + q[1] * c[1] + q[2] * c[2]).clamp(-1.0, 1.0).acos();
                    let a = (-(d * d) / (2.0 * radius * radius)).exp() as f32;
                    for k in 0..3 {
                        px[k] = px[k] * (1.0 - a) + colour[k] * a;
                    }
                }
                out.pixel_mut(row, col).copy_from_slice(&px.map(|v| v.clamp(0.0, 1.0)));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SynthVideoSpec {
    pub video_id: String,
    pub segments: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub k: usize,
    /// also write the key frames as PPM
    pub frames: bool,
}

impl Default for SynthVideoSpec {
    fn default() -> Self {
        Self {
            video_id: "synthetic".into(),
            segments: 12,
            width: 512,
            height: 256,
            seed: 1,
            k: 5,
            frames: true,
        }
    }
}

/// Writes glimpse feature tensors for every segment plus a manifest; returns
/// the manifest path.
pub fn write_synth_video(dir: &Path, spec: &SynthVideoSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("features"))
        .with_context(|| format!("creating {}", dir.display()))?;
    if spec.frames {
        std::fs::create_dir_all(dir.join("frames"))?;
    }
    let scene = SynthScene::new(spec.seed, spec.width, spec.height);
    let extractor = PatchStats;
    let span = u64::from(DEFAULT_FPS * SEGMENT_SECONDS);
    let grid = glimpse_grid();
    let mut segments = Vec::with_capacity(spec.segments);
    for t in 0..spec.segments {
        let raster = scene.frame(t);
        if spec.frames {
            write_pnm(&raster, &dir.join(format!("frames/seg_{t:04}.ppm")))?;
        }
        let frame = ErpFrame::new(raster)?;
        let features = grid_features(&frame, GridKind::Cvs, spec.k, &extractor as &dyn FeatureExtractor)?;
        let mut glimpses = Vec::with_capacity(grid.len());
        for (n, (g, f)) in grid.iter().zip(&features).enumerate() {
            let rel = PathBuf::from(format!("features/seg_{t:04}_g{n:02}.cvst"));
            write_tensor(&f.to_tensor(), &dir.join(&rel))?;
            glimpses.push(GlimpseFeature {
                theta: g.center.theta(),
                phi: g.center.phi(),
                path: rel,
            });
        }
        segments.push(SegmentEntry {
            start_frame: t as u64 * span,
            end_frame: (t as u64 + 1) * span,
            glimpses,
            features: None,
        });
    }
    let manifest = VideoManifest {
        video_id: spec.video_id.clone(),
        fps: DEFAULT_FPS,
        segments,
    };
    let path = dir.join("manifest.json");
    write_json(&manifest, &path)?;
    Ok(path)
}

/// Writes `n` synthetic triplets as feature tensors plus a triplet manifest.
pub fn write_synth_triplets(dir: &Path, n: usize, seed: u64, cfg: &SynthConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("features"))
        .with_context(|| format!("creating {}", dir.display()))?;
    let set = synth_triplets(seed, n, cfg);
    let mut triplets = Vec::with_capacity(n);
    for (i, t) in set.triplets.iter().enumerate() {
        let mut names = Vec::with_capacity(3);
        for (tag, x) in [("p", &t.p), ("c", &t.c), ("n", &t.n)] {
            let rel = PathBuf::from(format!("features/t{i:05}_{tag}.cvst"));
            write_tensor(&x.to_tensor(), &dir.join(&rel))?;
            names.push(rel);
        }
        let random = names.pop().unwrap();
        let casual = names.pop().unwrap();
        let professional = names.pop().unwrap();
        triplets.push(TripletEntry {
            professional,
            casual,
            random,
        });
    }
    let path = dir.join("triplets.json");
    write_json(&TripletManifest { triplets }, &path)?;
    write_json(&set.quality, &dir.join("quality.json"))?;
    Ok(path)
}
