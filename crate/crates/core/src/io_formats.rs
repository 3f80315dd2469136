//! File formats: the binary tensor file, the tagged parameter container,
//! PNM images, and the JSON video and triplet manifests.
//!
//! Tensor file layout, all integers little-endian:
//!
//! ```text
//! "CVST" | version u16 | dtype u8 (0 = f32, 1 = f64) | ndim u8 | dims u32 x ndim | payload
//! ```
//!
//! The payload is row-major with the channel axis last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::sphere_geom::{glimpse_grid, Viewpoint};
use crate::scoremap::grid_position;

pub const TENSOR_MAGIC: [u8; 4] = *b"CVST";
pub const CONTAINER_MAGIC: [u8; 4] = *b"CVSP";
pub const FORMAT_VERSION: u16 = 1;
pub const DEFAULT_FPS: u32 = 5;
pub const SEGMENT_SECONDS: u32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic at byte {offset}")]
    BadMagic { path: PathBuf, offset: usize },
    #[error("{path}: unsupported version {version} at byte {offset}")]
    UnsupportedVersion {
        path: PathBuf,
        offset: usize,
        version: u16,
    },
    #[error("{path}: unknown dtype tag {tag} at byte {offset}")]
    UnknownDtype { path: PathBuf, offset: usize, tag: u8 },
    #[error("{path}: truncated at byte {offset}: need {needed} more bytes, {available} available")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{path}: {extra} unexpected trailing bytes at byte {offset}")]
    TrailingBytes {
        path: PathBuf,
        offset: usize,
        extra: usize,
    },
    #[error("{path}: invalid entry name at byte {offset}")]
    BadName { path: PathBuf, offset: usize },
    #[error("{path}: expected dtype {expected:?}, found {found:?}")]
    DtypeMismatch {
        path: PathBuf,
        expected: Dtype,
        found: Dtype,
    },
    #[error("tensor shape {dims:?} does not match payload length {len}")]
    ShapeMismatch { dims: Vec<usize>, len: usize },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: segment {segment} has no feature file for glimpse ({theta}, {phi})")]
    MissingGlimpse {
        path: PathBuf,
        segment: usize,
        theta: f64,
        phi: f64,
    },
    #[error("{path}: image error: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

/// A dense n-dimensional tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if len != data.len() || dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(FormatError::ShapeMismatch {
                dims,
                len: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn into_f64(self) -> Vec<f64> {
        match self.data {
            TensorData::F32(v) => v.into_iter().map(f64::from).collect(),
            TensorData::F64(v) => v,
        }
    }
}

fn encode_body(t: &Tensor, out: &mut Vec<u8>) {
    out.push(t.dtype().tag());
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &t.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
}

/// Serializes a tensor to the tensor-file byte layout.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + t.data.len() * t.dtype().size());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    encode_body(t, &mut out);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(FormatError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.offset;
        if self.take(4)? != magic {
            return Err(FormatError::BadMagic {
                path: self.path.to_path_buf(),
                offset: at,
            });
        }
        let at = self.offset;
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion {
                path: self.path.to_path_buf(),
                offset: at,
                version,
            });
        }
        Ok(())
    }

    fn body(&mut self) -> Result<Tensor> {
        let at = self.offset;
        let tag = self.u8()?;
        let dtype = Dtype::from_tag(tag).ok_or(FormatError::UnknownDtype {
            path: self.path.to_path_buf(),
            offset: at,
            tag,
        })?;
        let ndim = self.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let nbytes = count.and_then(|c| c.checked_mul(dtype.size()));
        let payload = match nbytes {
            Some(n) => self.take(n)?,
            None => {
                return Err(FormatError::Truncated {
                    path: self.path.to_path_buf(),
                    offset: self.offset,
                    needed: usize::MAX,
                    available: self.bytes.len() - self.offset,
                })
            }
        };
        let data = match dtype {
            Dtype::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Tensor { dims, data })
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(FormatError::TrailingBytes {
                path: self.path.to_path_buf(),
                offset: self.offset,
                extra: self.bytes.len() - self.offset,
            });
        }
        Ok(())
    }
}

/// Parses tensor-file bytes; `path` is only used in error messages.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let mut cur = Cursor {
        bytes,
        offset: 0,
        path,
    };
    cur.header(&TENSOR_MAGIC)?;
    let t = cur.body()?;
    cur.finish()?;
    Ok(t)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| FormatError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_tensor(&bytes, path)
}

/// Reads a tensor that must be stored as f64.
pub fn read_tensor_f64(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let t = read_tensor(path)?;
    match t.data {
        TensorData::F64(v) => Ok((t.dims, v)),
        TensorData::F32(_) => Err(FormatError::DtypeMismatch {
            path: path.to_path_buf(),
            expected: Dtype::F64,
            found: Dtype::F32,
        }),
    }
}

/// Serializes named tensors into the tagged parameter container:
/// `"CVSP" | version u16 | count u32 | (name_len u16 | name | tensor body) x count`.
pub fn encode_container(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        encode_body(t, &mut out);
    }
    out
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut cur = Cursor {
        bytes,
        offset: 0,
        path,
    };
    cur.header(&CONTAINER_MAGIC)?;
    let count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let at = cur.offset;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| FormatError::BadName {
                path: path.to_path_buf(),
                offset: at,
            })?
            .to_string();
        entries.push((name, cur.body()?));
    }
    cur.finish()?;
    Ok(entries)
}

pub fn write_container(entries: &[(String, Tensor)], path: &Path) -> Result<()> {
    write_atomic(path, &encode_container(entries))
}

pub fn read_container(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_container(&bytes, path)
}

/// Reads a binary PGM (P5) or PPM (P6) image with values scaled to `[0, 1]`.
pub fn read_pnm(path: &Path) -> Result<Raster> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| FormatError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        image::DynamicImage::ImageLuma8(g) => {
            Raster::from_vec(w, h, 1, g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
        }
        other => Raster::from_vec(
            w,
            h,
            3,
            other.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        ),
    };
    Ok(raster.expect("decoded buffer matches its dimensions"))
}

/// Writes a 1-channel raster as binary PGM or a 3-channel raster as binary PPM.
/// Values are clamped to `[0, 1]` and quantized to 8 bits.
pub fn write_pnm(raster: &Raster, path: &Path) -> Result<()> {
    let (magic, channels) = match raster.channels() {
        1 => ("P5", 1),
        3 => ("P6", 3),
        c => {
            return Err(FormatError::Image {
                path: path.to_path_buf(),
                message: format!("cannot write {c}-channel raster as PNM"),
            })
        }
    };
    let mut bytes = format!("{magic}\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    bytes.reserve(raster.width() * raster.height() * channels);
    bytes.extend(
        raster
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    write_atomic(path, &bytes)
}

/// One glimpse feature file inside a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlimpseFeature {
    pub theta: f64,
    pub phi: f64,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub start_frame: u64,
    /// Exclusive.
    pub end_frame: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub glimpses: Vec<GlimpseFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

/// A video as a sequence of fixed-length segments with their feature files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    #[serde(default = "default_fps")]
    pub fps: u32,
    pub segments: Vec<SegmentEntry>,
}

fn default_fps() -> u32 {
    DEFAULT_FPS
}

impl VideoManifest {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn frames_per_segment(&self) -> u64 {
        u64::from(self.fps * SEGMENT_SECONDS)
    }

    /// Feature paths of segment `t` in sphere-grid order; every grid glimpse
    /// must be present exactly once.
    pub fn sphere_glimpse_paths(&self, t: usize, manifest_path: &Path) -> Result<Vec<PathBuf>> {
        let seg = &self.segments[t];
        let grid = glimpse_grid();
        let mut paths: Vec<Option<PathBuf>> = vec![None; grid.len()];
        for gf in &seg.glimpses {
            let manifest_err = |message: String| FormatError::Manifest {
                path: manifest_path.to_path_buf(),
                message,
            };
            let center = Viewpoint::new(gf.theta, gf.phi).map_err(|e| manifest_err(e.to_string()))?;
            let (tier, band) = grid_position(&center).ok_or_else(|| {
                manifest_err(format!(
                    "segment {t}: glimpse ({}, {}) is not a sphere-grid position",
                    gf.theta, gf.phi
                ))
            })?;
            let slot = &mut paths[tier * 4 + band];
            if slot.is_some() {
                return Err(manifest_err(format!(
                    "segment {t}: glimpse ({}, {}) listed twice",
                    gf.theta, gf.phi
                )));
            }
            *slot = Some(gf.path.clone());
        }
        paths
            .into_iter()
            .zip(&grid)
            .map(|(p, g)| {
                p.ok_or(FormatError::MissingGlimpse {
                    path: manifest_path.to_path_buf(),
                    segment: t,
                    theta: g.center.theta(),
                    phi: g.center.phi(),
                })
            })
            .collect()
    }
}

/// Loads a video manifest, resolves relative feature paths against the
/// manifest directory, and validates segment contiguity and file existence.
pub fn load_manifest(path: &Path) -> Result<VideoManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut m: VideoManifest = serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let err = |message: String| FormatError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    if m.fps == 0 {
        return Err(err("fps must be positive".into()));
    }
    if m.segments.is_empty() {
        return Err(err("manifest lists no segments".into()));
    }
    let span = m.frames_per_segment();
    let last = m.segments.len() - 1;
    for (t, seg) in m.segments.iter_mut().enumerate() {
        if seg.end_frame <= seg.start_frame {
            return Err(err(format!("segment {t} is empty or reversed")));
        }
        let len = seg.end_frame - seg.start_frame;
        if len > span || (len < span && t != last) {
            return Err(err(format!(
                "segment {t} spans {len} frames; segments must span {span} frames"
            )));
        }
        for gf in &mut seg.glimpses {
            gf.path = base.join(&gf.path);
        }
        if let Some(f) = &mut seg.features {
            *f = base.join(&*f);
        }
    }
    for t in 1..m.segments.len() {
        let (prev, cur) = (&m.segments[t - 1], &m.segments[t]);
        if cur.start_frame < prev.end_frame {
            return Err(err(format!("segments {} and {t} overlap", t - 1)));
        }
        if cur.start_frame > prev.end_frame {
            return Err(err(format!("gap between segments {} and {t}", t - 1)));
        }
    }
    for (t, seg) in m.segments.iter().enumerate() {
        let files = seg.glimpses.iter().map(|g| &g.path).chain(seg.features.as_ref());
        for f in files {
            if !f.is_file() {
                return Err(err(format!(
                    "segment {t}: feature file {} does not exist",
                    f.display()
                )));
            }
        }
    }
    Ok(m)
}

/// Loads a manifest for sphere-map scoring: every segment must list all 12
/// grid glimpses.
pub fn load_sphere_manifest(path: &Path) -> Result<VideoManifest> {
    let m = load_manifest(path)?;
    for t in 0..m.segments.len() {
        m.sphere_glimpse_paths(t, path)?;
    }
    Ok(m)
}

/// One training triplet as three feature files keyed by class tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletEntry {
    pub professional: PathBuf,
    pub casual: PathBuf,
    pub random: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletManifest {
    pub triplets: Vec<TripletEntry>,
}

/// Loads a triplet manifest with paths resolved against its directory.
pub fn load_triplet_manifest(path: &Path) -> Result<TripletManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut m: TripletManifest =
        serde_json::from_str(&text).map_err(|source| FormatError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if m.triplets.is_empty() {
        return Err(FormatError::Manifest {
            path: path.to_path_buf(),
            message: "manifest lists no triplets".into(),
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    for (n, e) in m.triplets.iter_mut().enumerate() {
        for p in [&mut e.professional, &mut e.casual, &mut e.random] {
            *p = base.join(&*p);
            if !p.is_file() {
                return Err(FormatError::Manifest {
                    path: path.to_path_buf(),
                    message: format!("triplet {n}: feature file {} does not exist", p.display()),
                });
            }
        }
    }
    Ok(m)
}

/// Serializes a value as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}
