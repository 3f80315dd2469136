//! Spherical coordinates, equirectangular and gnomonic projections, glimpse
//! footprints and solid-angle accounting.
//!
//! Angles are degrees at every public boundary. Latitude `theta` runs from
//! -90 (south pole) to +90, longitude `phi` is kept in `[0, 360)`.
//!
//! Unit vectors use `x = cos(theta) cos(phi)`, `y = cos(theta) sin(phi)`,
//! `z = sin(theta)`. A tangent plane at a view center has `u` pointing east
//! and `v` pointing north along the local meridian.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;

/// Longitudes of the sphere-tiling grid.
pub const GRID_LONGITUDES: [f64; 4] = [0.0, 90.0, 180.0, 270.0];
/// Latitude tiers of the sphere-tiling grid, top to bottom.
pub const GRID_LATITUDES: [f64; 3] = [67.5, 0.0, -67.5];
/// Horizontal field of view of a standard glimpse.
pub const DEFAULT_HFOV: f64 = 90.0;
/// Width:height ratio of a standard glimpse.
pub const DEFAULT_ASPECT: f64 = 4.0 / 3.0;
/// Minimum sample count accepted by the Monte Carlo area estimators.
pub const MIN_MC_SAMPLES: usize = 100_000;

/// Latitudes of the dense comparison grid (11 tiers).
pub const DENSE_LATITUDES: [f64; 11] = [
    90.0, 67.5, 45.0, 22.5, 11.25, 0.0, -11.25, -22.5, -45.0, -67.5, -90.0,
];
/// Number of longitudes of the dense comparison grid (every 20 degrees).
pub const DENSE_LONGITUDE_COUNT: usize = 18;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("point lies {distance:.6} degrees from the projection center; must be below 90")]
    BeyondHorizon { distance: f64 },
    #[error("horizontal field of view {0} outside (0, 180)")]
    InvalidFov(f64),
    #[error("aspect ratio {0} must be positive")]
    InvalidAspect(f64),
    #[error("enlargement {0} must be non-negative")]
    InvalidEnlarge(f64),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("output size must be positive, got {0}x{1}")]
    InvalidOutputSize(usize, usize),
    #[error("{0} Monte Carlo samples requested; at least {MIN_MC_SAMPLES} required")]
    TooFewSamples(usize),
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;

/// Maps any longitude into `[0, 360)`.
pub fn normalize_longitude(phi: f64) -> f64 {
    let r = phi.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Maps any longitude difference into `[-180, 180)`.
pub fn wrap_signed(delta: f64) -> f64 {
    let r = (delta + 180.0).rem_euclid(360.0) - 180.0;
    if r >= 180.0 {
        -180.0
    } else {
        r
    }
}

/// Absolute longitude difference with wraparound, in `[0, 180]`.
pub fn longitude_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// A direction on the unit sphere given by latitude and longitude in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawViewpoint")]
pub struct Viewpoint {
    theta: f64,
    phi: f64,
}

#[derive(Deserialize)]
struct RawViewpoint {
    theta: f64,
    phi: f64,
}

impl TryFrom<RawViewpoint> for Viewpoint {
    type Error = GeomError;

    fn try_from(raw: RawViewpoint) -> Result<Self> {
        Viewpoint::new(raw.theta, raw.phi)
    }
}

impl Viewpoint {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(GeomError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&theta) {
            return Err(GeomError::LatitudeOutOfRange(theta));
        }
        Ok(Self {
            theta,
            phi: normalize_longitude(phi),
        })
    }

    /// Builds a viewpoint from a nonzero 3-vector (not necessarily unit length).
    pub fn from_vector(v: [f64; 3]) -> Self {
        let horizontal = v[0].hypot(v[1]);
        let theta = v[2].atan2(horizontal).to_degrees();
        let phi = if horizontal == 0.0 {
            0.0
        } else {
            normalize_longitude(v[1].atan2(v[0]).to_degrees())
        };
        Self { theta, phi }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.to_radians().sin_cos();
        let (sp, cp) = self.phi.to_radians().sin_cos();
        [ct * cp, ct * sp, st]
    }

    /// The same direction rotated eastward by `delta` degrees of longitude.
    pub fn rotated(&self, delta: f64) -> Self {
        Self {
            theta: self.theta,
            phi: normalize_longitude(self.phi + delta),
        }
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Great-circle distance in degrees, in `[0, 180]`.
pub fn angular_distance(a: &Viewpoint, b: &Viewpoint) -> f64 {
    angle_between(a.to_vector(), b.to_vector())
}

pub(crate) fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b)).to_degrees()
}

/// Squared chord length between two unit vectors; monotone in angular distance.
pub(crate) fn chord2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot(d, d)
}

/// Equirectangular map coordinates `(x, y)` in degrees relative to the
/// standard parallel `theta1` and central meridian `phi0`.
pub fn erp_project_angular(p: &Viewpoint, theta1: f64, phi0: f64) -> (f64, f64) {
    let x = wrap_signed(p.phi - phi0) * theta1.to_radians().cos();
    let y = p.theta - theta1;
    (x, y)
}

/// Inverse of [`erp_project_angular`].
pub fn erp_unproject_angular(x: f64, y: f64, theta1: f64, phi0: f64) -> Result<Viewpoint> {
    Viewpoint::new(y + theta1, phi0 + x / theta1.to_radians().cos())
}

/// A full equirectangular panorama. The central meridian sits at the
/// horizontal center of the image and north is row zero.
#[derive(Clone, Debug)]
pub struct ErpFrame {
    raster: Raster,
    theta1: f64,
    phi0: f64,
}

impl ErpFrame {
    pub fn new(raster: Raster) -> Result<Self> {
        Self::with_reference(raster, 0.0, 0.0)
    }

    pub fn with_reference(raster: Raster, theta1: f64, phi0: f64) -> Result<Self> {
        if raster.width() == 0 || raster.height() == 0 || raster.channels() == 0 {
            return Err(GeomError::InvalidFrame("empty raster".into()));
        }
        if raster.width() != 2 * raster.height() {
            return Err(GeomError::InvalidFrame(format!(
                "width {} must be twice the height {}",
                raster.width(),
                raster.height()
            )));
        }
        if !(theta1.abs() < 90.0) || !phi0.is_finite() {
            return Err(GeomError::InvalidFrame(format!(
                "reference parallel {theta1} / meridian {phi0} out of range"
            )));
        }
        Ok(Self {
            raster,
            theta1,
            phi0: normalize_longitude(phi0),
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    /// Continuous pixel coordinates `(col, row)`; pixel `(r, c)` spans
    /// `[c, c + 1) x [r, r + 1)`.
    pub fn project(&self, p: &Viewpoint) -> (f64, f64) {
        let (x, y) = erp_project_angular(p, self.theta1, self.phi0);
        let span_x = 360.0 * self.theta1.to_radians().cos();
        let col = (x / span_x + 0.5) * self.width() as f64;
        let row = (90.0 - self.theta1 - y) / 180.0 * self.height() as f64;
        (col, row)
    }

    /// Inverse of [`ErpFrame::project`].
    pub fn unproject(&self, col: f64, row: f64) -> Result<Viewpoint> {
        let span_x = 360.0 * self.theta1.to_radians().cos();
        let x = (col / self.width() as f64 - 0.5) * span_x;
        let y = 90.0 - self.theta1 - row / self.height() as f64 * 180.0;
        erp_unproject_angular(x, y, self.theta1, self.phi0)
    }

    /// Viewpoint at the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> Viewpoint {
        self.unproject(col as f64 + 0.5, row as f64 + 0.5)
            .expect("pixel centers lie inside the latitude range")
    }

    /// Bilinear sample with longitude wraparound and latitude clamping.
    pub fn sample(&self, p: &Viewpoint, out: &mut [f32]) {
        let (col, row) = self.project(p);
        let w = self.width() as isize;
        let h = self.height() as isize;
        let fx = col - 0.5;
        let fy = row - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = (fx - x0) as f32;
        let ay = (fy - y0) as f32;
        let x0 = x0 as isize;
        let y0 = y0 as isize;
        let cx = |x: isize| x.rem_euclid(w) as usize;
        let cy = |y: isize| y.clamp(0, h - 1) as usize;
        let p00 = self.raster.pixel(cy(y0), cx(x0));
        let p01 = self.raster.pixel(cy(y0), cx(x0 + 1));
        let p10 = self.raster.pixel(cy(y0 + 1), cx(x0));
        let p11 = self.raster.pixel(cy(y0 + 1), cx(x0 + 1));
        for (c, o) in out.iter_mut().enumerate() {
            let top = p00[c] + (p01[c] - p00[c]) * ax;
            let bottom = p10[c] + (p11[c] - p10[c]) * ax;
            *o = top + (bottom - top) * ay;
        }
    }
}

/// Orthonormal basis of the tangent plane at a view center.
#[derive(Clone, Copy, Debug)]
pub struct TangentFrame {
    center: Viewpoint,
    forward: [f64; 3],
    east: [f64; 3],
    north: [f64; 3],
}

impl TangentFrame {
    pub fn at(center: Viewpoint) -> Self {
        let (st, ct) = center.theta.to_radians().sin_cos();
        let (sp, cp) = center.phi.to_radians().sin_cos();
        Self {
            center,
            forward: [ct * cp, ct * sp, st],
            east: [-sp, cp, 0.0],
            north: [-st * cp, -st * sp, ct],
        }
    }

    pub fn center(&self) -> Viewpoint {
        self.center
    }

    pub fn forward(&self) -> [f64; 3] {
        self.forward
    }

    /// Tangent coordinates of a direction vector, or `None` behind the horizon.
    pub fn project_vector(&self, q: [f64; 3]) -> Option<(f64, f64)> {
        let d = dot(q, self.forward);
        if d <= 0.0 {
            return None;
        }
        Some((dot(q, self.east) / d, dot(q, self.north) / d))
    }

    /// Unnormalized direction through tangent point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [
            self.forward[0] + u * self.east[0] + v * self.north[0],
            self.forward[1] + u * self.east[1] + v * self.north[1],
            self.forward[2] + u * self.east[2] + v * self.north[2],
        ]
    }

    pub fn unproject(&self, u: f64, v: f64) -> Viewpoint {
        if u == 0.0 && v == 0.0 {
            return self.center;
        }
        Viewpoint::from_vector(self.ray(u, v))
    }
}

/// Gnomonic projection of `p` onto the tangent plane at `center`.
pub fn gnomonic_forward(p: &Viewpoint, center: &Viewpoint) -> Result<(f64, f64)> {
    if p == center {
        return Ok((0.0, 0.0));
    }
    let distance = angular_distance(p, center);
    if distance >= 90.0 {
        return Err(GeomError::BeyondHorizon { distance });
    }
    TangentFrame::at(*center)
        .project_vector(p.to_vector())
        .ok_or(GeomError::BeyondHorizon { distance })
}

/// Inverse gnomonic projection.
pub fn gnomonic_inverse(u: f64, v: f64, center: &Viewpoint) -> Viewpoint {
    TangentFrame::at(*center).unproject(u, v)
}

/// A normal field-of-view window on the sphere at a given segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Glimpse {
    pub center: Viewpoint,
    pub hfov: f64,
    pub aspect: f64,
    pub segment: usize,
}

impl Glimpse {
    pub fn new(center: Viewpoint, hfov: f64, aspect: f64, segment: usize) -> Result<Self> {
        if !(hfov > 0.0 && hfov < 180.0) {
            return Err(GeomError::InvalidFov(hfov));
        }
        if !(aspect > 0.0 && aspect.is_finite()) {
            return Err(GeomError::InvalidAspect(aspect));
        }
        Ok(Self {
            center,
            hfov,
            aspect,
            segment,
        })
    }

    /// 90 degree, 4:3 glimpse at segment zero.
    pub fn standard(center: Viewpoint) -> Self {
        Self {
            center,
            hfov: DEFAULT_HFOV,
            aspect: DEFAULT_ASPECT,
            segment: 0,
        }
    }

    pub fn with_segment(mut self, segment: usize) -> Self {
        self.segment = segment;
        self
    }

    /// Tangent-plane half extents `(tan(h/2), tan(h/2) / aspect)`, scaled by `1 + enlarge`.
    pub fn half_extents(&self, enlarge: f64) -> (f64, f64) {
        let tu = (self.hfov / 2.0).to_radians().tan() * (1.0 + enlarge);
        (tu, tu / self.aspect)
    }

    pub fn footprint(&self, enlarge: f64) -> Footprint {
        let (tu, tv) = self.half_extents(enlarge);
        Footprint {
            frame: TangentFrame::at(self.center),
            half_u: tu,
            half_v: tv,
        }
    }

    /// Center of bin `(i, j)` when the glimpse is divided into a `k x k` grid.
    /// Indices outside `0..k` address the bins of a padded ring around it.
    pub fn bin_center(&self, k: usize, i: isize, j: isize) -> Viewpoint {
        let (tu, tv) = self.half_extents(0.0);
        let (u, v) = bin_offset(k, i, j, tu, tv);
        gnomonic_inverse(u, v, &self.center)
    }
}

pub(crate) fn bin_offset(k: usize, i: isize, j: isize, tu: f64, tv: f64) -> (f64, f64) {
    let k = k as f64;
    let u = (-1.0 + (2 * j + 1) as f64 / k) * tu;
    let v = (1.0 - (2 * i + 1) as f64 / k) * tv;
    (u, v)
}

/// The rectangular spherical footprint of a window: every direction whose
/// gnomonic image lies within `|u| <= half_u`, `|v| <= half_v`.
#[derive(Clone, Copy, Debug)]
pub struct Footprint {
    frame: TangentFrame,
    half_u: f64,
    half_v: f64,
}

impl Footprint {
    /// The open hemisphere facing `center`.
    pub fn hemisphere(center: Viewpoint) -> Self {
        Self {
            frame: TangentFrame::at(center),
            half_u: f64::INFINITY,
            half_v: f64::INFINITY,
        }
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (self.half_u, self.half_v)
    }

    pub fn contains(&self, q: [f64; 3]) -> bool {
        let d = dot(q, self.frame.forward);
        if d <= 0.0 {
            return false;
        }
        dot(q, self.frame.east).abs() <= self.half_u * d
            && dot(q, self.frame.north).abs() <= self.half_v * d
    }
}

/// The 12-glimpse sphere tiling, ordered by latitude tier (north first) then longitude.
pub fn glimpse_grid() -> Vec<Glimpse> {
    GRID_LATITUDES
        .iter()
        .flat_map(|&theta| {
            GRID_LONGITUDES.iter().map(move |&phi| {
                Glimpse::standard(Viewpoint::new(theta, phi).expect("grid latitudes are valid"))
            })
        })
        .collect()
}

/// The dense 18 x 11 comparison grid (198 glimpses).
pub fn dense_glimpse_grid() -> Vec<Glimpse> {
    DENSE_LATITUDES
        .iter()
        .flat_map(|&theta| {
            (0..DENSE_LONGITUDE_COUNT).map(move |i| {
                let phi = i as f64 * 360.0 / DENSE_LONGITUDE_COUNT as f64;
                Glimpse::standard(Viewpoint::new(theta, phi).expect("grid latitudes are valid"))
            })
        })
        .collect()
}

/// Tangent-plane coordinates of the pixel centers of an `out_w x out_h` render.
pub fn tangent_grid(g: &Glimpse, out_w: usize, out_h: usize, enlarge: f64) -> Vec<(f64, f64)> {
    let (tu, tv) = g.half_extents(enlarge);
    let mut grid = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        let v = (1.0 - 2.0 * (r as f64 + 0.5) / out_h as f64) * tv;
        for c in 0..out_w {
            let u = (2.0 * (c as f64 + 0.5) / out_w as f64 - 1.0) * tu;
            grid.push((u, v));
        }
    }
    grid
}

/// Renders the NFOV view of `g` from an ERP frame.
pub fn extract_nfov(
    frame: &ErpFrame,
    g: &Glimpse,
    out_w: usize,
    out_h: usize,
    enlarge: f64,
) -> Result<Raster> {
    if out_w == 0 || out_h == 0 {
        return Err(GeomError::InvalidOutputSize(out_w, out_h));
    }
    if !(enlarge >= 0.0) {
        return Err(GeomError::InvalidEnlarge(enlarge));
    }
    let tangent = TangentFrame::at(g.center);
    let channels = frame.raster().channels();
    let mut out = Raster::new(out_w, out_h, channels);
    for (idx, (u, v)) in tangent_grid(g, out_w, out_h, enlarge).into_iter().enumerate() {
        let p = tangent.unproject(u, v);
        let start = idx * channels;
        frame.sample(&p, &mut out.data_mut()[start..start + channels]);
    }
    Ok(out)
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Uniformly distributed unit vectors on the sphere.
pub fn sphere_samples(n: usize, seed: u64) -> impl Iterator<Item = [f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(move |_| {
        let z: f64 = rng.random_range(-1.0..1.0);
        let a: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * a.cos(), r * a.sin(), z]
    })
}

/// Monte Carlo solid angle of a footprint, in steradians.
pub fn footprint_solid_angle(fp: &Footprint, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(GeomError::TooFewSamples(n_samples));
    }
    let hits = sphere_samples(n_samples, seed)
        .filter(|q| fp.contains(*q))
        .count();
    let p = hits as f64 / n_samples as f64;
    Ok(Estimate {
        value: 4.0 * PI * p,
        std_error: 4.0 * PI * (p * (1.0 - p) / n_samples as f64).sqrt(),
    })
}

/// Monte Carlo solid angle of a glimpse window enlarged by `enlarge`.
pub fn solid_angle(g: &Glimpse, enlarge: f64, n_samples: usize, seed: u64) -> Result<Estimate> {
    if !(enlarge >= 0.0) {
        return Err(GeomError::InvalidEnlarge(enlarge));
    }
    footprint_solid_angle(&g.footprint(enlarge), n_samples, seed)
}

/// Closed-form solid angle of a rectangular frustum with tangent half extents `(tu, tv)`.
pub fn frustum_solid_angle(tu: f64, tv: f64) -> f64 {
    4.0 * (tu * tv / ((1.0 + tu * tu) * (1.0 + tv * tv)).sqrt()).asin()
}

/// Fraction of an equirectangular image covered by a footprint, counted on
/// a `2n x n` pixel grid.
pub fn erp_area_fraction(fp: &Footprint, rows: usize) -> f64 {
    let cols = 2 * rows;
    let mut hits = 0usize;
    for r in 0..rows {
        let theta = (90.0 - (r as f64 + 0.5) * 180.0 / rows as f64).to_radians();
        let (st, ct) = theta.sin_cos();
        for c in 0..cols {
            let phi = ((c as f64 + 0.5) * 360.0 / cols as f64).to_radians();
            let (sp, cp) = phi.sin_cos();
            if fp.contains([ct * cp, ct * sp, st]) {
                hits += 1;
            }
        }
    }
    hits as f64 / (rows * cols) as f64
}
