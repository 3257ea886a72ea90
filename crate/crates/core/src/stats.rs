//! Dataset statistics: class frequency of appearance, median-frequency
//! class weights, ground sample distance and covered area.

use serde::{Deserialize, Serialize};

use crate::compose::ChannelStack;
use crate::raster::{LabelMap, Plane};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequency {
    /// `pixel_counts[c] / presence_pixel_totals[c]`, zero for absent classes.
    pub foa: Vec<f64>,
    /// Total pixels of each class over the dataset.
    pub pixel_counts: Vec<u64>,
    /// Total pixels of the images in which each class appears.
    pub presence_pixel_totals: Vec<u64>,
}

impl ClassFrequency {
    fn empty(class_count: usize) -> Self {
        Self {
            foa: vec![0.0; class_count],
            pixel_counts: vec![0; class_count],
            presence_pixel_totals: vec![0; class_count],
        }
    }

    /// Adds one image's counts. Partial frequencies merge associatively.
    pub fn merge(&mut self, other: &ClassFrequency) {
        for c in 0..self.pixel_counts.len() {
            self.pixel_counts[c] += other.pixel_counts[c];
            self.presence_pixel_totals[c] += other.presence_pixel_totals[c];
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        for c in 0..self.foa.len() {
            self.foa[c] = if self.presence_pixel_totals[c] == 0 {
                0.0
            } else {
                self.pixel_counts[c] as f64 / self.presence_pixel_totals[c] as f64
            };
        }
    }

    fn from_image(labels: &LabelMap, class_count: usize) -> Self {
        let mut f = Self::empty(class_count);
        let hist = labels.histogram(class_count);
        let total = labels.labels().len() as u64;
        for (c, &n) in hist.iter().enumerate() {
            f.pixel_counts[c] = n;
            if n > 0 {
                f.presence_pixel_totals[c] = total;
            }
        }
        f.refresh();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    /// Classes with zero frequency; their weight is 0.
    pub absent: Vec<bool>,
}

pub fn compute_foa(label_maps: &[LabelMap], class_count: usize) -> Result<ClassFrequency> {
    if label_maps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = ClassFrequency::empty(class_count);
    for map in label_maps {
        total.merge(&ClassFrequency::from_image(map, class_count));
    }
    Ok(total)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median-frequency balancing: `w(c) = median(foa) / foa(c)` over present classes.
pub fn class_weights(freq: &ClassFrequency) -> Result<ClassWeights> {
    let mut present: Vec<f64> = freq.foa.iter().copied().filter(|&f| f > 0.0).collect();
    if present.is_empty() {
        return Err(Error::AllClassesAbsent);
    }
    let med = median(&mut present);
    let absent: Vec<bool> = freq.foa.iter().map(|&f| f <= 0.0).collect();
    let weights = freq
        .foa
        .iter()
        .map(|&f| if f > 0.0 { med / f } else { 0.0 })
        .collect();
    Ok(ClassWeights { weights, absent })
}

/// Ground sample distance in cm/pixel from pixel pitch (µm), focal length
/// (mm) and flight altitude (m).
pub fn theoretical_gsd(pixel_size_um: f64, focal_mm: f64, altitude_m: f64) -> Result<f64> {
    for (v, name) in [
        (pixel_size_um, "pixel_size_um"),
        (focal_mm, "focal_mm"),
        (altitude_m, "altitude_m"),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveInput(name));
        }
    }
    // µm * m / mm = mm; mm / 10 = cm.
    Ok(pixel_size_um * altitude_m / focal_mm / 10.0)
}

/// Something that marks covered pixels.
pub trait CoverageMask {
    fn covered_pixels(&self) -> u64;
}

impl CoverageMask for LabelMap {
    /// Non-background pixels.
    fn covered_pixels(&self) -> u64 {
        self.labels().iter().filter(|&&l| l != 0).count() as u64
    }
}

impl CoverageMask for Plane {
    fn covered_pixels(&self) -> u64 {
        self.data().iter().filter(|&&v| v != 0.0).count() as u64
    }
}

impl CoverageMask for ChannelStack {
    /// Pixels with a nonzero value in any channel.
    fn covered_pixels(&self) -> u64 {
        let planes: Vec<&Plane> = self.planes().collect();
        (0..self.width() * self.height())
            .filter(|&i| planes.iter().any(|p| p.data()[i] != 0.0))
            .count() as u64
    }
}

/// Covered area in hectares.
pub fn covered_area(mask: &impl CoverageMask, gsd_cm: f64) -> Result<f64> {
    if !(gsd_cm > 0.0) {
        return Err(Error::NonPositiveInput("gsd_cm"));
    }
    let pixel_m2 = (gsd_cm / 100.0).powi(2);
    Ok(mask.covered_pixels() as f64 * pixel_m2 / 10_000.0)
}
