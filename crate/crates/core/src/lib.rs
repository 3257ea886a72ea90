//! Large-scale weed mapping from multispectral UAV orthomosaics.
//!
//! The crate covers the full processing chain:
//!
//! 1. [`calib`] converts raw sensor counts into reflectance (vignette,
//!    radiance and panel-based reflectance factors).
//! 2. [`compose`] derives NDVI and stacks the RGB / CIR composites into the
//!    12-channel (RedEdge-M) or 8-channel (Sequoia) input layout.
//! 3. [`tiling`] cuts the stack into fixed-size tiles with right/bottom
//!    padding and reassembles per-tile probability maps.
//! 4. [`classify`] hosts the per-tile classifier interface, an NDVI and
//!    crop-row baseline, and ingestion of externally produced predictions.
//! 5. [`eval`] computes precision/recall curves, AUC and the label-based
//!    segmentation metrics.
//!
//! [`stats`] provides class-balancing weights and GSD/area figures, and
//! [`synth`] renders synthetic sugar-beet fields with ground truth.

pub mod calib;
pub mod classify;
pub mod cli;
pub mod compose;
pub mod error;
pub mod eval;
pub mod raster;
pub mod stats;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};

/// Number of semantic classes: background, crop, weed.
pub const CLASS_COUNT: usize = 3;

/// Class names in id order.
pub const CLASS_NAMES: [&str; CLASS_COUNT] = ["bg", "crop", "weed"];
