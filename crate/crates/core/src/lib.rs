//! Spherical view scoring and highlight planning for 360-degree video.
//!
//! The pipeline tiles the viewing sphere with twelve glimpses, scores each
//! with a small convolutional decoder that emits position-sensitive score
//! maps, stitches the maps into one sphere score map per segment, searches
//! it with a multi-scale sliding window, and links the per-segment views
//! under a smooth-motion bound into a ranked highlight.

pub mod decoder;
pub mod features;
pub mod io_formats;
pub mod metrics;
pub mod planner;
pub mod ranking;
pub mod raster;
pub mod scoremap;
pub mod sphere_geom;
