//! Stand-in glimpse feature extractor: renders the NFOV view and reduces
//! each cell of a square grid to a few local image statistics.

use crate::decoder::{FeatureTensor, SHRINK};
use crate::raster::Raster;
use crate::sphere_geom::{extract_nfov, ErpFrame, GeomError, Glimpse};

pub const PATCH_CHANNELS: usize = 8;
/// Rendered pixels per feature cell, horizontally and vertically (4:3 view).
pub const CELL_WIDTH: usize = 8;
pub const CELL_HEIGHT: usize = 6;

/// Maps a rendered view to a `side x side x channels` tensor.
pub trait FeatureExtractor: Sync {
    fn channels(&self) -> usize;
    fn extract(&self, view: &Raster, side: usize) -> FeatureTensor;
}

/// Per-cell mean colour, luminance spread and extremes, and mean absolute
/// horizontal and vertical gradients.
#[derive(Clone, Copy, Debug, Default)]
pub struct PatchStats;

fn luminance(px: &[f32]) -> f64 {
    match px {
        [r, g, b, ..] => 0.299 * f64::from(*r) + 0.587 * f64::from(*g) + 0.114 * f64::from(*b),
        [v] => f64::from(*v),
        _ => 0.0,
    }
}

fn rgb(px: &[f32]) -> [f64; 3] {
    match px {
        [r, g, b, ..] => [f64::from(*r), f64::from(*g), f64::from(*b)],
        [v] => [f64::from(*v); 3],
        _ => [0.0; 3],
    }
}

impl FeatureExtractor for PatchStats {
    fn channels(&self) -> usize {
        PATCH_CHANNELS
    }

    fn extract(&self, view: &Raster, side: usize) -> FeatureTensor {
        let (w, h) = (view.width(), view.height());
        let lum: Vec<f64> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| luminance(view.pixel(r, c)))
            .collect();
        let mut values = Vec::with_capacity(side * side * PATCH_CHANNELS);
        for i in 0..side {
            let (r0, r1) = (i * h / side, ((i + 1) * h / side).max(i * h / side + 1));
            for j in 0..side {
                let (c0, c1) = (j * w / side, ((j + 1) * w / side).max(j * w / side + 1));
                let mut colour = [0.0; 3];
                let (mut sum, mut sq, mut gx, mut gy) = (0.0, 0.0, 0.0, 0.0);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for r in r0..r1.min(h) {
                    for c in c0..c1.min(w) {
                        let l = lum[r * w + c];
                        let [cr, cg, cb] = rgb(view.pixel(r, c));
                        colour[0] += cr;
                        colour[1] += cg;
                        colour[2] += cb;
                        sum += l;
                        sq += l * l;
                        lo = lo.min(l);
                        hi = hi.max(l);
                        if c + 1 < w {
                            gx += (lum[r * w + c + 1] - l).abs();
                        }
                        if r + 1 < h {
                            gy += (lum[(r + 1) * w + c] - l).abs();
                        }
                    }
                }
                let n = ((r1.min(h) - r0) * (c1.min(w) - c0)).max(1) as f64;
                let mean = sum / n;
                values.extend_from_slice(&[
                    colour[0] / n,
                    colour[1] / n,
                    colour[2] / n,
                    (sq / n - mean * mean).max(0.0).sqrt(),
                    gx / n,
                    gy / n,
                    if hi.is_finite() { hi } else { 0.0 },
                    if lo.is_finite() { lo } else { 0.0 },
                ]);
            }
        }
        FeatureTensor::new(side, side, PATCH_CHANNELS, values).expect("finite image statistics")
    }
}

/// Renders glimpse `g` (enlarged by `enlarge`) and extracts a `side x side`
/// feature tensor.
pub fn glimpse_features(
    frame: &ErpFrame,
    g: &Glimpse,
    side: usize,
    enlarge: f64,
    extractor: &dyn FeatureExtractor,
) -> Result<FeatureTensor, GeomError> {
    let view = extract_nfov(frame, g, side * CELL_WIDTH, side * CELL_HEIGHT, enlarge)?;
    Ok(extractor.extract(&view, side))
}

/// Feature tensor side that decodes to a `k x k` map, or to a
/// `(k+2) x (k+2)` padded map for enlarged glimpses.
pub fn feature_side(k: usize, enlarged: bool) -> usize {
    k + SHRINK + if enlarged { 2 } else { 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::Viewpoint;

    #[test]
    fn constant_frame_has_flat_features() {
        let frame = ErpFrame::new(Raster::filled(64, 32, &[0.5, 0.25, 1.0])).unwrap();
        let g = Glimpse::standard(Viewpoint::new(10.0, 30.0).unwrap());
        let f = glimpse_features(&frame, &g, 14, 0.0, &PatchStats).unwrap();
        assert_eq!(f.dims(), [14, 14, PATCH_CHANNELS]);
        let lum = 0.299 * 0.5 + 0.587 * 0.25 + 0.114;
        for cell in f.values().chunks(PATCH_CHANNELS) {
            assert!((cell[0] - 0.5).abs() < 1e-6);
            assert!((cell[2] - 1.0).abs() < 1e-6);
            assert!(cell[3] < 1e-6 && cell[4] < 1e-6 && cell[5] < 1e-6);
            assert!((cell[6] - lum).abs() < 1e-6);
        }
    }

    #[test]
    fn sides_match_decoder() {
        assert_eq!(feature_side(5, false), crate::decoder::INPUT_SIDE);
        assert_eq!(feature_side(5, true), crate::decoder::PADDED_INPUT_SIDE);
    }

    #[test]
    fn black_frame_gives_zero_features() {
        let frame = ErpFrame::new(Raster::new(64, 32, 3)).unwrap();
        let g = Glimpse::standard(Viewpoint::new(67.5, 90.0).unwrap());
        let f = glimpse_features(&frame, &g, 16, 0.2, &PatchStats).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }
}
