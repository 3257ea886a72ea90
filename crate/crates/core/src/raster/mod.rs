//! Raster data model: float planes, bands, label maps and probability maps.

mod io;
mod manifest;

pub use io::{
    decode_raw_plane, load_band_plane, read_label_png, read_plane_stack, read_probability_map,
    write_label_png, write_plane_stack, write_png_u16, write_png_u8, write_probability_map,
    PROB_MAGIC, STACK_MAGIC,
};
pub(crate) use io::{image_io_err as image_error, write_u16 as io_write_u16};
pub use manifest::{
    load_manifest, load_raster, write_manifest, BandEntry, Camera, DatasetManifest, TileSize,
};

use crate::{Error, Result};

/// Per-pixel tolerance on the probability simplex constraint.
pub const NORMALIZATION_EPS: f32 = 1e-4;

/// Row-major 2-D grid of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "plane of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [f32] {
        &mut self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Single-channel integer image as produced by the sensor, before calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPlane {
    pub width: usize,
    pub height: usize,
    /// Bit depth of the container (8 or 16).
    pub bits: u8,
    pub data: Vec<u16>,
}

impl RawPlane {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    /// Scales the integer samples to `[0, 1]` by dividing by `2^bits - 1`.
    pub fn to_unit_plane(&self) -> Plane {
        let max = ((1u32 << self.bits) - 1) as f32;
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32 / max).collect(),
        }
    }
}

/// A named spectral band.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    /// Center wavelength in nm.
    pub center_nm: f32,
    /// Bandwidth in nm.
    pub bandwidth_nm: f32,
    pub plane: Plane,
}

impl Band {
    pub fn new(name: impl Into<String>, center_nm: f32, bandwidth_nm: f32, plane: Plane) -> Result<Self> {
        let name = name.into();
        if !plane.all_finite() {
            return Err(Error::InvariantViolation(format!(
                "band {name:?} contains non-finite values"
            )));
        }
        Ok(Self {
            name,
            center_nm,
            bandwidth_nm,
            plane,
        })
    }

    /// Band without spectral metadata, used for derived planes.
    pub fn derived(name: impl Into<String>, plane: Plane) -> Result<Self> {
        Self::new(name, 0.0, 0.0, plane)
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }
}

/// Aligned set of bands sharing one pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralRaster {
    bands: Vec<Band>,
    /// Ground sample distance, cm per pixel.
    pub gsd_cm: f64,
    /// Dataset label the raster was loaded from.
    pub origin: String,
}

impl MultispectralRaster {
    pub fn new(bands: Vec<Band>, gsd_cm: f64, origin: impl Into<String>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::EmptyBandList);
        }
        let dims = bands[0].plane.dims();
        for (i, band) in bands.iter().enumerate() {
            if band.plane.dims() != dims {
                return Err(Error::DimensionMismatch(band.name.clone()));
            }
            if bands[..i].iter().any(|b| b.name == band.name) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate band name {:?}",
                    band.name
                )));
            }
        }
        Ok(Self {
            bands,
            gsd_cm,
            origin: origin.into(),
        })
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, name: &str) -> Option<&Band> {
        self.bands.iter().find(|b| b.name == name)
    }

    pub fn width(&self) -> usize {
        self.bands[0].width()
    }

    pub fn height(&self) -> usize {
        self.bands[0].height()
    }
}

/// Per-pixel class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>, class_count: usize) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "label map of {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::InvariantViolation(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Histogram of class ids, `class_count` bins.
    pub fn histogram(&self, class_count: usize) -> Vec<u64> {
        let mut hist = vec![0u64; class_count];
        for &l in &self.labels {
            hist[l as usize] += 1;
        }
        hist
    }
}

/// Per-class probability planes over one pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl ProbabilityMap {
    /// Builds a map, checking shapes and that every value lies in `[0, 1]`.
    pub fn new(planes: Vec<Plane>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::InvariantViolation("probability map needs at least one class".into()));
        };
        let (width, height) = first.dims();
        for p in &planes {
            if p.dims() != (width, height) {
                return Err(Error::DimensionMismatch(format!(
                    "class plane {}x{} vs {width}x{height}",
                    p.width(),
                    p.height()
                )));
            }
            check_unit_range(p.data())?;
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    /// Every pixel assigned to class 0 with certainty.
    pub fn background(width: usize, height: usize, class_count: usize) -> Self {
        let mut planes = vec![Plane::zeros(width, height); class_count];
        planes[0] = Plane::filled(width, height, 1.0);
        Self {
            width,
            height,
            planes,
        }
    }

    pub(crate) fn from_planes_unchecked(width: usize, height: usize, planes: Vec<Plane>) -> Self {
        Self {
            width,
            height,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_count(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, class: usize) -> &Plane {
        &self.planes[class]
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    /// Checks the per-pixel simplex constraint `|sum - 1| <= eps`.
    pub fn check_normalized(&self, eps: f32) -> Result<()> {
        check_simplex(&self.planes, eps)
    }
}

pub(crate) fn check_unit_range(values: &[f32]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::InvariantViolation(format!(
            "probability {v} outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

pub(crate) fn check_simplex(planes: &[Plane], eps: f32) -> Result<()> {
    let Some(first) = planes.first() else {
        return Ok(());
    };
    for i in 0..first.len() {
        let sum: f32 = planes.iter().map(|p| p.data()[i]).sum();
        if (sum - 1.0).abs() > eps {
            return Err(Error::InvariantViolation(format!(
                "pixel {i} probabilities sum to {sum}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_rejects_misaligned_bands() {
        let a = Band::new("red", 668.0, 10.0, Plane::zeros(4, 4)).unwrap();
        let b = Band::new("nir", 840.0, 40.0, Plane::zeros(5, 4)).unwrap();
        match MultispectralRaster::new(vec![a, b], 1.0, "t") {
            Err(Error::DimensionMismatch(name)) => assert_eq!(name, "nir"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn raster_rejects_duplicate_names() {
        let a = Band::new("red", 668.0, 10.0, Plane::zeros(2, 2)).unwrap();
        assert!(MultispectralRaster::new(vec![a.clone(), a], 1.0, "t").is_err());
    }

    #[test]
    fn band_rejects_nan() {
        let mut p = Plane::zeros(2, 2);
        p.set(1, 1, f32::NAN);
        assert!(Band::new("red", 0.0, 0.0, p).is_err());
    }

    #[test]
    fn label_map_range_checked() {
        assert!(LabelMap::new(2, 1, vec![0, 3], 3).is_err());
        assert!(LabelMap::new(2, 1, vec![0, 2], 3).is_ok());
    }

    #[test]
    fn probability_map_range_checked() {
        let p = Plane::filled(1, 1, 1.5);
        assert!(matches!(
            ProbabilityMap::new(vec![p]),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn unit_scaling_maps_extremes_exactly() {
        let raw = RawPlane {
            width: 3,
            height: 1,
            bits: 16,
            data: vec![0, 32768, 65535],
        };
        let p = raw.to_unit_plane();
        assert_eq!(p.data()[0], 0.0);
        assert_eq!(p.data()[2], 1.0);
        assert!(p.data()[1] > 0.0 && p.data()[1] < 1.0);
    }
}
