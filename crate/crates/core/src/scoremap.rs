//! Position score maps, Gaussian position pooling, padded stitching into a
//! sphere score map, and multi-scale sliding-window view search.
//!
//! A [`PositionScoreMap`] stores a `k x k x k^2` tensor in `(i, j, channel)`
//! order; channel `k * l + m` carries the evidence for grid position `(l, m)`.
//! Pooling weights that channel at cell `(i, j)` by `kappa(l - i) kappa(m - j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::sphere_geom::{
    chord2, glimpse_grid, normalize_longitude, Glimpse, TangentFrame, Viewpoint, DEFAULT_ASPECT,
    GRID_LATITUDES, GRID_LONGITUDES,
};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_BANDWIDTH: f64 = 1.0;
/// Horizontal window sizes scanned by default, in degrees.
pub const DEFAULT_SCALES: [f64; 3] = [65.5, 90.0, 110.0];
pub const MIN_SCALE: f64 = 60.0;
pub const MAX_SCALE: f64 = 110.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreMapError {
    #[error("kernel bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("grid size k must be at least 1")]
    InvalidK,
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("score map contains non-finite values")]
    NonFinite,
    #[error("expected 12 glimpse maps, got {0}")]
    GlimpseCount(usize),
    #[error("glimpse at ({theta}, {phi}) is not a sphere-grid position")]
    UnknownGlimpse { theta: f64, phi: f64 },
    #[error("glimpse at ({theta}, {phi}) given more than once")]
    DuplicateGlimpse { theta: f64, phi: f64 },
    #[error("window scale {0} outside [{MIN_SCALE}, {MAX_SCALE}]")]
    InvalidScale(f64),
    #[error("no window scales given")]
    EmptyScales,
}

pub type Result<T, E = ScoreMapError> = std::result::Result<T, E>;

/// Gaussian kernel `exp(-u^2 / 2h^2) / (sqrt(2 pi) h)`.
pub fn gaussian_kernel(u: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ScoreMapError::InvalidBandwidth(h));
    }
    Ok((-u * u / (2.0 * h * h)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * h))
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ScoreMapError::NonFinite)
    }
}

/// The `k x k x k^2` layered score tensor of one view.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionScoreMap {
    k: usize,
    scores: Vec<f64>,
}

impl PositionScoreMap {
    pub fn new(k: usize, scores: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(ScoreMapError::InvalidK);
        }
        let expected = k * k * k * k;
        if scores.len() != expected {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![k, k, k * k],
                found: vec![scores.len()],
            });
        }
        check_finite(&scores)?;
        Ok(Self { k, scores })
    }

    /// Builds a map from a `(k, k, k^2)` shaped buffer, checking the shape.
    pub fn from_shape(dims: &[usize], scores: Vec<f64>) -> Result<Self> {
        match dims {
            [a, b, c] if a == b && *c == a * a && *a > 0 => Self::new(*a, scores),
            _ => Err(ScoreMapError::DimensionMismatch {
                expected: vec![DEFAULT_K, DEFAULT_K, DEFAULT_K * DEFAULT_K],
                found: dims.to_vec(),
            }),
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            scores: vec![0.0; k * k * k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.k, self.k, self.k * self.k]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<f64> {
        self.scores
    }

    pub fn get(&self, i: usize, j: usize, channel: usize) -> f64 {
        self.scores[(i * self.k + j) * self.k * self.k + channel]
    }

    /// The `k^2` channel vector at cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let kk = self.k * self.k;
        let start = (i * self.k + j) * kk;
        &self.scores[start..start + kk]
    }
}

/// A `(k+2) x (k+2) x k^2` map whose one-cell border is padding.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedScoreMap {
    k: usize,
    scores: Vec<f64>,
}

impl PaddedScoreMap {
    pub fn new(k: usize, scores: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(ScoreMapError::InvalidK);
        }
        let side = k + 2;
        if scores.len() != side * side * k * k {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![side, side, k * k],
                found: vec![scores.len()],
            });
        }
        check_finite(&scores)?;
        Ok(Self { k, scores })
    }

    /// Builds a padded map from a `(k+2, k+2, k^2)` shaped buffer.
    pub fn from_shape(dims: &[usize], scores: Vec<f64>) -> Result<Self> {
        match dims {
            [a, b, c] if a == b && *a >= 3 && *c == (a - 2) * (a - 2) => Self::new(a - 2, scores),
            _ => Err(ScoreMapError::DimensionMismatch {
                expected: vec![DEFAULT_K + 2, DEFAULT_K + 2, DEFAULT_K * DEFAULT_K],
                found: dims.to_vec(),
            }),
        }
    }

    /// Places `map` in the center with the border filled by `border`.
    pub fn embed(map: &PositionScoreMap, border: f64) -> Self {
        let k = map.k;
        let kk = k * k;
        let side = k + 2;
        let mut scores = vec![border; side * side * kk];
        for i in 0..k {
            for j in 0..k {
                let dst = ((i + 1) * side + j + 1) * kk;
                scores[dst..dst + kk].copy_from_slice(map.cell(i, j));
            }
        }
        Self { k, scores }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.k + 2, self.k + 2, self.k * self.k]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Channel vector at padded cell `(i, j)`, both in `0..k+2`.
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let kk = self.k * self.k;
        let start = (i * (self.k + 2) + j) * kk;
        &self.scores[start..start + kk]
    }
}

/// Cuts the padded border and returns the central `k x k` block.
pub fn pad_strip(padded: &PaddedScoreMap) -> PositionScoreMap {
    let k = padded.k;
    let mut scores = Vec::with_capacity(k * k * k * k);
    for i in 0..k {
        for j in 0..k {
            scores.extend_from_slice(padded.cell(i + 1, j + 1));
        }
    }
    PositionScoreMap { k, scores }
}

/// Precomputed Gaussian position-pooling weights for one `(k, h)`.
#[derive(Clone, Debug)]
pub struct PoolingKernel {
    k: usize,
    h: f64,
    /// `weights[(i*k + j)*k^2 + k*l + m] = kappa(l - i) * kappa(m - j)`
    weights: Vec<f64>,
}

impl PoolingKernel {
    pub fn new(k: usize, h: f64) -> Result<Self> {
        if k == 0 {
            return Err(ScoreMapError::InvalidK);
        }
        let kappa = (0..k)
            .map(|i| {
                (0..k)
                    .map(|l| gaussian_kernel(l as f64 - i as f64, h))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let kk = k * k;
        let mut weights = vec![0.0; kk * kk];
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    for m in 0..k {
                        weights[(i * k + j) * kk + k * l + m] = kappa[i][l] * kappa[j][m];
                    }
                }
            }
        }
        Ok(Self { k, h, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Weights applied to the channel vector of spatial bin `bin = i*k + j`.
    pub fn bin_weights(&self, bin: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.weights[bin * kk..(bin + 1) * kk]
    }

    /// Pooled contribution of one channel vector placed at spatial bin `bin`.
    pub fn bin_score(&self, bin: usize, cell: &[f64]) -> f64 {
        self.bin_weights(bin)
            .iter()
            .zip(cell)
            .fold(0.0, |acc, (w, s)| acc + w * s)
    }

    pub fn pool(&self, map: &PositionScoreMap) -> Result<f64> {
        if map.k != self.k {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![self.k, self.k, self.k * self.k],
                found: map.dims().to_vec(),
            });
        }
        let kk = self.k * self.k;
        Ok((0..kk).fold(0.0, |acc, bin| {
            acc + self.bin_score(bin, &map.scores[bin * kk..(bin + 1) * kk])
        }))
    }

    /// Gradient of the pooled score with respect to every map entry; the
    /// pooling is linear, so this is the weight tensor itself.
    pub fn gradient(&self) -> &[f64] {
        &self.weights
    }
}

/// Gaussian position pooling of a `k x k x k^2` map with bandwidth `h`.
pub fn position_pool(map: &PositionScoreMap, h: f64) -> Result<f64> {
    PoolingKernel::new(map.k, h)?.pool(map)
}

/// The stitched `3k x 4k x k^2` score map covering the sphere for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereScoreMap {
    k: usize,
    cells: Vec<f64>,
    centers: Vec<Viewpoint>,
    vectors: Vec<[f64; 3]>,
}

impl SphereScoreMap {
    /// Wraps a `(3k, 4k, k^2)` cell buffer and computes the cell centers.
    pub fn from_cells(k: usize, cells: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(ScoreMapError::InvalidK);
        }
        let expected = 3 * k * 4 * k * k * k;
        if cells.len() != expected {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![3 * k, 4 * k, k * k],
                found: vec![cells.len()],
            });
        }
        check_finite(&cells)?;
        let centers = sphere_cell_centers(k);
        let vectors = centers.iter().map(Viewpoint::to_vector).collect();
        Ok(Self {
            k,
            cells,
            centers,
            vectors,
        })
    }

    pub fn from_shape(dims: &[usize], cells: Vec<f64>) -> Result<Self> {
        match dims {
            [r, c, ch] if r % 3 == 0 && *r > 0 && *c == 4 * (r / 3) && *ch == (r / 3) * (r / 3) => {
                Self::from_cells(r / 3, cells)
            }
            _ => Err(ScoreMapError::DimensionMismatch {
                expected: vec![3 * DEFAULT_K, 4 * DEFAULT_K, DEFAULT_K * DEFAULT_K],
                found: dims.to_vec(),
            }),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        3 * self.k
    }

    pub fn cols(&self) -> usize {
        4 * self.k
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.rows(), self.cols(), self.k * self.k]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Channel vector of cell `(row, col)`; `col` wraps modulo `4k`.
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        self.cell_at(row * self.cols() + col % self.cols())
    }

    pub(crate) fn cell_at(&self, index: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.cells[index * kk..(index + 1) * kk]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Viewpoint {
        self.centers[row * self.cols() + col % self.cols()]
    }

    pub fn cell_centers(&self) -> &[Viewpoint] {
        &self.centers
    }

    /// Index of the cell nearest to direction `q`; lowest `(row, col)` wins ties.
    pub fn nearest_cell(&self, q: [f64; 3]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (idx, v) in self.vectors.iter().enumerate() {
            let d = chord2(q, *v);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }

    /// Nearest cell to `q` as seen from a window in longitude band `band`.
    ///
    /// Cells within [`TIE_SLACK`] squared chord of the nearest are tied. Ties
    /// go to the lowest row, then the lowest column counted eastward from the
    /// band opposite the window, so the choice turns with the window under
    /// quarter turns. Away from that far band this is plain lowest column.
    pub fn window_nearest_cell(&self, q: [f64; 3], band: usize) -> usize {
        let d: Vec<f64> = self.vectors.iter().map(|v| chord2(q, *v)).collect();
        let nearest = d.iter().copied().fold(f64::INFINITY, f64::min);
        let cols = self.cols();
        let start = (band + 2) % GRID_LONGITUDES.len() * self.k;
        let key = |idx: usize| (idx / cols, (idx % cols + cols - start) % cols);
        let mut best = None;
        for (idx, &di) in d.iter().enumerate() {
            if di <= nearest + TIE_SLACK && best.is_none_or(|b| key(idx) < key(b)) {
                best = Some(idx);
            }
        }
        best.expect("sphere maps have cells")
    }

    /// The same content rotated eastward by `bands` quarter turns of longitude.
    pub fn rotated_bands(&self, bands: usize) -> Self {
        let kk = self.k * self.k;
        let cols = self.cols();
        let mut cells = vec![0.0; self.cells.len()];
        for r in 0..self.rows() {
            for c in 0..cols {
                let dst = (r * cols + (c + bands * self.k) % cols) * kk;
                cells[dst..dst + kk].copy_from_slice(self.cell(r, c));
            }
        }
        Self {
            k: self.k,
            cells,
            centers: self.centers.clone(),
            vectors: self.vectors.clone(),
        }
    }
}

/// Spherical centers of the `3k x 4k` cells, row-major.
pub fn sphere_cell_centers(k: usize) -> Vec<Viewpoint> {
    let grid = glimpse_grid();
    let cols = 4 * k;
    let mut centers = vec![grid[0].center; 3 * k * cols];
    for (tier, _) in GRID_LATITUDES.iter().enumerate() {
        for (band, _) in GRID_LONGITUDES.iter().enumerate() {
            let g = &grid[tier * GRID_LONGITUDES.len() + band];
            for i in 0..k {
                for j in 0..k {
                    centers[(tier * k + i) * cols + band * k + j] =
                        g.bin_center(k, i as isize, j as isize);
                }
            }
        }
    }
    centers
}

/// Locates a glimpse center on the sphere grid as `(latitude tier, longitude band)`.
pub fn grid_position(center: &Viewpoint) -> Option<(usize, usize)> {
    const TOL: f64 = 1e-9;
    let tier = GRID_LATITUDES
        .iter()
        .position(|t| (t - center.theta()).abs() < TOL)?;
    let band = GRID_LONGITUDES
        .iter()
        .position(|p| crate::sphere_geom::longitude_gap(*p, center.phi()) < TOL)?;
    Some((tier, band))
}

/// Stitches the 12 padded glimpse maps into one sphere score map, keeping
/// only each map's central `k x k` block.
pub fn stitch_sphere_map(maps: &[(Glimpse, PaddedScoreMap)]) -> Result<SphereScoreMap> {
    let slots = GRID_LATITUDES.len() * GRID_LONGITUDES.len();
    if maps.len() != slots {
        return Err(ScoreMapError::GlimpseCount(maps.len()));
    }
    let k = maps[0].1.k();
    let kk = k * k;
    let cols = 4 * k;
    let mut cells = vec![0.0; 3 * k * cols * kk];
    let mut filled = vec![false; slots];
    for (g, padded) in maps {
        if padded.k() != k {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![k + 2, k + 2, kk],
                found: padded.dims().to_vec(),
            });
        }
        let (theta, phi) = (g.center.theta(), g.center.phi());
        let (tier, band) =
            grid_position(&g.center).ok_or(ScoreMapError::UnknownGlimpse { theta, phi })?;
        let slot = tier * GRID_LONGITUDES.len() + band;
        if std::mem::replace(&mut filled[slot], true) {
            return Err(ScoreMapError::DuplicateGlimpse { theta, phi });
        }
        let block = pad_strip(padded);
        for i in 0..k {
            for j in 0..k {
                let dst = ((tier * k + i) * cols + band * k + j) * kk;
                cells[dst..dst + kk].copy_from_slice(block.cell(i, j));
            }
        }
    }
    SphereScoreMap::from_cells(k, cells)
}

/// A scored view window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCandidate {
    pub center: Viewpoint,
    pub hfov_scale: f64,
    pub score: f64,
}

impl WindowCandidate {
    pub fn new(center: Viewpoint, hfov_scale: f64, score: f64) -> Result<Self> {
        check_scale(hfov_scale)?;
        Ok(Self {
            center,
            hfov_scale,
            score,
        })
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if (MIN_SCALE..=MAX_SCALE).contains(&scale) {
        Ok(())
    } else {
        Err(ScoreMapError::InvalidScale(scale))
    }
}

/// Bin-center directions of a `k x k` window, row-major from the top-left.
pub fn window_bin_vectors(center: &Viewpoint, hfov_scale: f64, k: usize) -> Vec<[f64; 3]> {
    let frame = TangentFrame::at(*center);
    let tu = (hfov_scale / 2.0).to_radians().tan();
    let tv = tu / DEFAULT_ASPECT;
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k as isize {
        for j in 0..k as isize {
            let (u, v) = crate::sphere_geom::bin_offset(k, i, j, tu, tv);
            out.push(frame.unproject(u, v).to_vector());
        }
    }
    out
}

/// Squared-chord slack under which two cells are equally near a bin center.
pub const TIE_SLACK: f64 = 1e-12;

/// Longitude band (`0..4`) whose grid glimpse is nearest in longitude.
pub fn longitude_band(center: &Viewpoint) -> usize {
    let bands = GRID_LONGITUDES.len();
    ((normalize_longitude(center.phi() + 45.0) / 90.0) as usize).min(bands - 1)
}

/// Sphere-map cell indices feeding each of the window's `k x k` bins.
pub fn window_gather_indices(s: &SphereScoreMap, center: &Viewpoint, hfov_scale: f64) -> Vec<usize> {
    let band = longitude_band(center);
    window_bin_vectors(center, hfov_scale, s.k)
        .into_iter()
        .map(|q| s.window_nearest_cell(q, band))
        .collect()
}

/// Crops the `k x k x k^2` map under a window by nearest-cell lookup.
pub fn window_gather(s: &SphereScoreMap, w: &WindowCandidate) -> PositionScoreMap {
    let kk = s.k * s.k;
    let mut scores = Vec::with_capacity(kk * kk);
    for idx in window_gather_indices(s, &w.center, w.hfov_scale) {
        scores.extend_from_slice(s.cell_at(idx));
    }
    PositionScoreMap { k: s.k, scores }
}

/// Validates, sorts ascending and deduplicates window scales.
pub fn normalize_scales(scales: &[f64]) -> Result<Vec<f64>> {
    if scales.is_empty() {
        return Err(ScoreMapError::EmptyScales);
    }
    for &s in scales {
        check_scale(s)?;
    }
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

/// Precomputed sliding-window geometry: the scan set is every cell center at
/// every scale, ordered by (scale ascending, row, col).
#[derive(Clone, Debug)]
pub struct WindowScanner {
    k: usize,
    kernel: PoolingKernel,
    candidates: Vec<(Viewpoint, f64)>,
    gathers: Vec<usize>,
}

impl WindowScanner {
    pub fn new(k: usize, scales: &[f64], h: f64) -> Result<Self> {
        let scales = normalize_scales(scales)?;
        let kernel = PoolingKernel::new(k, h)?;
        let template = SphereScoreMap::from_cells(k, vec![0.0; 12 * k * k * k * k])?;
        let candidates: Vec<(Viewpoint, f64)> = scales
            .iter()
            .flat_map(|&scale| template.centers.iter().map(move |c| (*c, scale)))
            .collect();
        let gathers = candidates
            .par_iter()
            .flat_map_iter(|(c, scale)| window_gather_indices(&template, c, *scale))
            .collect();
        Ok(Self {
            k,
            kernel,
            candidates,
            gathers,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Scores every candidate window, in scan order.
    pub fn scan(&self, s: &SphereScoreMap) -> Result<Vec<WindowCandidate>> {
        if s.k != self.k {
            return Err(ScoreMapError::DimensionMismatch {
                expected: vec![3 * self.k, 4 * self.k, self.k * self.k],
                found: s.dims().to_vec(),
            });
        }
        let kk = self.k * self.k;
        // pooled contribution of every cell at every bin position
        let mut partial = vec![0.0; s.cell_count() * kk];
        for cell in 0..s.cell_count() {
            let v = s.cell_at(cell);
            for bin in 0..kk {
                partial[cell * kk + bin] = self.kernel.bin_score(bin, v);
            }
        }
        Ok(self
            .candidates
            .iter()
            .zip(self.gathers.chunks(kk))
            .map(|(&(center, hfov_scale), idx)| {
                let score = idx
                    .iter()
                    .enumerate()
                    .fold(0.0, |acc, (bin, &cell)| acc + partial[cell * kk + bin]);
                WindowCandidate {
                    center,
                    hfov_scale,
                    score,
                }
            })
            .collect())
    }

    pub fn best(&self, s: &SphereScoreMap) -> Result<WindowCandidate> {
        Ok(argmax_candidate(&self.scan(s)?).expect("scan set is never empty"))
    }
}

/// First candidate with the maximal score.
pub fn argmax_candidate(candidates: &[WindowCandidate]) -> Option<WindowCandidate> {
    let mut best: Option<WindowCandidate> = None;
    for c in candidates {
        if best.is_none_or(|b| c.score > b.score) {
            best = Some(*c);
        }
    }
    best
}

/// Every scan-set window with its pooled score.
pub fn scan_windows(s: &SphereScoreMap, scales: &[f64], h: f64) -> Result<Vec<WindowCandidate>> {
    WindowScanner::new(s.k, scales, h)?.scan(s)
}

/// The best-scoring window over all cell centers and scales.
pub fn sliding_window_search(s: &SphereScoreMap, scales: &[f64], h: f64) -> Result<WindowCandidate> {
    WindowScanner::new(s.k, scales, h)?.best(s)
}

/// Pooled score of a window centered at every ERP pixel, min-max normalized
/// to `[0, 1]`; a constant field renders as 0.5.
pub fn render_heatmap(
    s: &SphereScoreMap,
    width: usize,
    height: usize,
    hfov_scale: f64,
    h: f64,
) -> Result<Raster> {
    check_scale(hfov_scale)?;
    let kernel = PoolingKernel::new(s.k, h)?;
    let values: Vec<f64> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let kernel = &kernel;
            (0..width).map(move |col| {
                // ERP layout with the central meridian at the image center
                let theta = 90.0 - (row as f64 + 0.5) * 180.0 / height as f64;
                let phi = (col as f64 + 0.5) * 360.0 / width as f64 - 180.0;
                let center = Viewpoint::new(theta, phi).expect("pixel centers are valid viewpoints");
                let crop = window_gather(
                    s,
                    &WindowCandidate {
                        center,
                        hfov_scale,
                        score: 0.0,
                    },
                );
                kernel.pool(&crop).expect("crop matches kernel size")
            })
        })
        .collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let data = values
        .iter()
        .map(|&v| if hi > lo { ((v - lo) / (hi - lo)) as f32 } else { 0.5 })
        .collect();
    Ok(Raster::from_vec(width, height, 1, data).expect("buffer sized width x height"))
}
