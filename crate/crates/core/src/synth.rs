//! Deterministic synthetic sugar-beet fields with pixel-exact ground truth.
//!
//! Crops are soft-edged disks centered on vertical row lines at a fixed
//! intra-row spacing; weeds are scattered uniformly between the rows and
//! never overlap a crop. Band values blend per-material reflectance by disk
//! coverage and add clamped Gaussian noise.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationBlock, PanelBlock, VignetteBlock};
use crate::raster::{
    write_label_png, write_manifest, write_png_u16, Band, BandEntry, Camera, DatasetManifest,
    LabelMap, MultispectralRaster, Plane, TileSize,
};
use crate::{Error, Result, CLASS_COUNT};

const BG: u8 = 0;
const CROP: u8 = 1;
const WEED: u8 = 2;
const MAX_WEED_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralProfile {
    pub name: String,
    pub center_nm: f32,
    pub bandwidth_nm: f32,
    pub soil: f32,
    pub crop: f32,
    pub weed: f32,
}

impl SpectralProfile {
    fn new(name: &str, center_nm: f32, bandwidth_nm: f32, [soil, crop, weed]: [f32; 3]) -> Self {
        Self {
            name: name.into(),
            center_nm,
            bandwidth_nm,
            soil,
            crop,
            weed,
        }
    }
}

/// RedEdge-M bands with soil / crop / weed reflectance.
pub fn rededge_profiles() -> Vec<SpectralProfile> {
    vec![
        SpectralProfile::new("blue", 475.0, 20.0, [0.08, 0.04, 0.05]),
        SpectralProfile::new("green", 560.0, 20.0, [0.12, 0.12, 0.14]),
        SpectralProfile::new("red", 668.0, 10.0, [0.20, 0.10, 0.11]),
        SpectralProfile::new("rededge", 717.0, 10.0, [0.22, 0.40, 0.48]),
        SpectralProfile::new("nir", 840.0, 40.0, [0.25, 0.80, 0.78]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub field_w_m: f64,
    pub field_h_m: f64,
    pub gsd_cm: f64,
    pub row_spacing_m: f64,
    pub intra_row_m: f64,
    pub crop_radius_m: f64,
    pub weed_radius_m: f64,
    /// Weeds per square meter.
    pub weed_density: f64,
    pub bands: Vec<SpectralProfile>,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            field_w_m: 20.0,
            field_h_m: 20.0,
            gsd_cm: 1.0,
            row_spacing_m: 0.5,
            intra_row_m: 0.18,
            crop_radius_m: 0.09,
            weed_radius_m: 0.07,
            weed_density: 4.0,
            bands: rededge_profiles(),
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("field_w_m", self.field_w_m),
            ("field_h_m", self.field_h_m),
            ("gsd_cm", self.gsd_cm),
            ("row_spacing_m", self.row_spacing_m),
            ("intra_row_m", self.intra_row_m),
            ("crop_radius_m", self.crop_radius_m),
            ("weed_radius_m", self.weed_radius_m),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be positive")));
            }
        }
        if !(self.weed_density >= 0.0) {
            return Err(Error::ConfigInvalid("weed_density must be non-negative".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::ConfigInvalid("noise_sigma must be non-negative".into()));
        }
        if self.bands.is_empty() {
            return Err(Error::ConfigInvalid("no bands".into()));
        }
        for (i, b) in self.bands.iter().enumerate() {
            if [b.soil, b.crop, b.weed].iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::ConfigInvalid(format!("band {:?}: profile outside [0, 1]", b.name)));
            }
            if self.bands[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::ConfigInvalid(format!("duplicate band {:?}", b.name)));
            }
        }
        let (w, h) = self.dims();
        if w == 0 || h == 0 {
            return Err(Error::ConfigInvalid("field smaller than one pixel".into()));
        }
        Ok(())
    }

    fn px_per_m(&self) -> f64 {
        100.0 / self.gsd_cm
    }

    /// Raster size in pixels.
    pub fn dims(&self) -> (usize, usize) {
        let s = self.px_per_m();
        (
            (self.field_w_m * s).round() as usize,
            (self.field_h_m * s).round() as usize,
        )
    }
}

/// Generated field with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    pub raster: MultispectralRaster,
    pub labels: LabelMap,
    /// Row line x positions in pixels (column-index coordinates).
    pub row_lines_px: Vec<f64>,
}

struct Canvas {
    width: usize,
    height: usize,
    crop_alpha: Vec<f32>,
    weed_alpha: Vec<f32>,
    labels: Vec<u8>,
}

impl Canvas {
    fn disk(&mut self, cx: f64, cy: f64, radius: f64, class: u8) {
        let x0 = (cx - radius - 1.0).floor().max(0.0) as usize;
        let y0 = (cy - radius - 1.0).floor().max(0.0) as usize;
        let x1 = ((cx + radius + 1.0).ceil().max(0.0) as usize).min(self.width);
        let y1 = ((cy + radius + 1.0).ceil().max(0.0) as usize).min(self.height);
        let alpha_plane = if class == CROP {
            &mut self.crop_alpha
        } else {
            &mut self.weed_alpha
        };
        for y in y0..y1 {
            for x in x0..x1 {
                let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let alpha = (radius + 0.5 - dist).clamp(0.0, 1.0) as f32;
                let i = y * self.width + x;
                alpha_plane[i] = alpha_plane[i].max(alpha);
                if dist <= radius && (class == CROP || self.labels[i] == BG) {
                    self.labels[i] = class;
                }
            }
        }
    }
}

pub fn generate_field(config: &FieldConfig) -> Result<SyntheticField> {
    config.validate()?;
    let (width, height) = config.dims();
    let s = config.px_per_m();
    let spacing = config.row_spacing_m * s;
    let intra = config.intra_row_m * s;
    let crop_r = config.crop_radius_m * s;
    let weed_r = config.weed_radius_m * s;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut canvas = Canvas {
        width,
        height,
        crop_alpha: vec![0.0; width * height],
        weed_alpha: vec![0.0; width * height],
        labels: vec![BG; width * height],
    };

    let row_lines_px: Vec<f64> = (0..)
        .map(|k| (k as f64 + 0.5) * spacing)
        .take_while(|&x| x < width as f64)
        .collect();

    let mut crops = Vec::new();
    for &x in &row_lines_px {
        let mut y = 0.5 * intra;
        while y < height as f64 {
            let jitter = rng.random_range(-0.1..=0.1) * intra;
            let radius = crop_r * rng.random_range(0.85..=1.0);
            crops.push((x, y + jitter, radius));
            y += intra;
        }
    }

    let weed_count = (config.weed_density * config.field_w_m * config.field_h_m).round() as usize;
    let clearance = crop_r + weed_r;
    let mut weeds = Vec::with_capacity(weed_count);
    for _ in 0..weed_count {
        let mut placed = false;
        for _ in 0..MAX_WEED_ATTEMPTS {
            let x = rng.random_range(0.0..width as f64);
            let y = rng.random_range(0.0..height as f64);
            let near = row_lines_px
                .iter()
                .map(|r| (x - r).abs())
                .fold(f64::INFINITY, f64::min);
            if near >= clearance {
                weeds.push((x, y, weed_r * rng.random_range(0.7..=1.0)));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::ConfigInvalid("no room for weeds between crop rows".into()));
        }
    }

    for &(x, y, r) in &weeds {
        canvas.disk(x, y, r, WEED);
    }
    for &(x, y, r) in &crops {
        canvas.disk(x, y, r, CROP);
    }

    let noise = Normal::new(0.0f32, config.noise_sigma.max(f32::MIN_POSITIVE))
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let bands = config
        .bands
        .iter()
        .enumerate()
        .map(|(b, profile)| {
            let mut plane = Plane::zeros(width, height);
            plane
                .data_mut()
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream((b * height + y) as u64 + 1);
                    for (x, out) in row.iter_mut().enumerate() {
                        let i = y * width + x;
                        let (ac, aw) = (canvas.crop_alpha[i], canvas.weed_alpha[i]);
                        let mut v = profile.soil * (1.0 - aw) + profile.weed * aw;
                        v = v * (1.0 - ac) + profile.crop * ac;
                        if config.noise_sigma > 0.0 {
                            v += noise.sample(&mut rng);
                        }
                        *out = v.clamp(0.0, 1.0);
                    }
                });
            Band::new(&profile.name, profile.center_nm, profile.bandwidth_nm, plane)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticField {
        raster: MultispectralRaster::new(bands, config.gsd_cm, format!("synth-{}", config.seed))?,
        labels: LabelMap::new(width, height, canvas.labels, CLASS_COUNT)?,
        row_lines_px,
    })
}

fn camera_for(bands: &[Band]) -> Camera {
    let names: Vec<&str> = bands.iter().map(|b| b.name.as_str()).collect();
    match names.as_slice() {
        ["blue", "green", "red", "rededge", "nir"] => Camera::RedEdgeM,
        ["green", "red", "rededge", "nir"] => Camera::Sequoia,
        _ => Camera::Custom,
    }
}

/// Sensor model used when writing raw counts: 16-bit, black level 1/16,
/// mild quadratic vignetting around the image center, unit gains.
fn raw_calibration(width: usize, height: usize, band_count: usize) -> CalibrationBlock {
    CalibrationBlock {
        a1: 1.0,
        a2: 0.0,
        a3: 0.0,
        exposure_s: 1.0,
        gain: 1.0,
        black_level: 0.0625,
        bit_depth: 16,
        vignette: VignetteBlock {
            ci: height as f64 / 2.0,
            cj: width as f64 / 2.0,
            q: [0.0, 1e-7, 0.0, 0.0, 0.0, 0.0],
        },
        panel: PanelBlock {
            rho_per_band: vec![0.5; band_count],
            region: [16, 16, 32, 32],
            image_path: "panel_{band}.png".into(),
        },
    }
}

/// Inverts the sensor model: reflectance (with unit reflectance factor) to raw counts.
fn to_raw(plane: &Plane, cal: &CalibrationBlock) -> Result<Vec<u16>> {
    let params = cal.params();
    let full = (1u32 << params.bit_depth) as f64;
    let (w, h) = plane.dims();
    let mut out = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = crate::calib::vignette_factor(y as f64, x as f64, &params)?;
            let p = plane.get(x, y) as f64 / v + params.black_level;
            out[y * w + x] = (p * full).round().clamp(0.0, full - 1.0) as u16;
        }
    }
    Ok(out)
}

/// Writes bands (16-bit PNG), `labels.png` and `manifest.json` under `dir`.
/// With `raw`, bands are written as sensor counts together with reflectance
/// panel images and a calibration block.
pub fn write_dataset(field: &SyntheticField, dir: &Path, raw: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let bands = field.raster.bands();
    let (w, h) = (field.raster.width(), field.raster.height());
    let calibration = raw.then(|| raw_calibration(w, h, bands.len()));
    let mut entries = Vec::with_capacity(bands.len());
    for (i, band) in bands.iter().enumerate() {
        let file = format!("{}.png", band.name);
        match &calibration {
            Some(cal) => {
                let counts = to_raw(&band.plane, cal)?;
                crate::raster::io_write_u16(w, h, counts, &dir.join(&file))?;
                let rho = cal.panel.rho_per_band[i] as f32;
                let panel = to_raw(&Plane::filled(64, 64, rho), cal)?;
                crate::raster::io_write_u16(64, 64, panel, &dir.join(cal.panel_image(&band.name)))?;
            }
            None => write_png_u16(&band.plane, dir.join(&file))?,
        }
        entries.push(BandEntry {
            name: band.name.clone(),
            center_nm: band.center_nm,
            bandwidth_nm: band.bandwidth_nm,
            path: file.into(),
        });
    }
    write_label_png(&field.labels, dir.join("labels.png"))?;
    let manifest = DatasetManifest {
        camera: camera_for(bands),
        gsd_cm: field.raster.gsd_cm,
        tile: TileSize::default(),
        bands: entries,
        calibration,
        labels: Some("labels.png".into()),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    write_manifest(&manifest, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> FieldConfig {
        FieldConfig {
            field_w_m: 3.0,
            field_h_m: 2.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn dimensions_follow_gsd() {
        let c = FieldConfig {
            field_w_m: 10.0,
            field_h_m: 10.0,
            ..Default::default()
        };
        assert_eq!(c.dims(), (1000, 1000));
    }

    #[test]
    fn no_weeds_without_density() {
        let c = FieldConfig {
            weed_density: 0.0,
            ..small(1)
        };
        let f = generate_field(&c).unwrap();
        let hist = f.labels.histogram(3);
        assert_eq!(hist[2], 0);
        assert!(hist[1] > 0);
    }

    #[test]
    fn crop_ndvi_before_noise() {
        let c = FieldConfig {
            noise_sigma: 0.0,
            weed_density: 0.0,
            ..small(2)
        };
        let f = generate_field(&c).unwrap();
        let nir = &f.raster.band("nir").unwrap().plane;
        let red = &f.raster.band("red").unwrap().plane;
        // Disk interiors are fully covered, hence pure crop reflectance.
        let (x, y) = (f.row_lines_px[0].round() as usize, 9);
        let ndvi = crate::compose::ndvi_value(nir.get(x, y), red.get(x, y));
        assert!((ndvi - 0.7 / 0.9).abs() < 1e-3, "{ndvi}");
    }

    #[test]
    fn crop_pixels_hug_row_lines() {
        let c = small(3);
        let f = generate_field(&c).unwrap();
        let limit = c.crop_radius_m * 100.0 / c.gsd_cm + 1.0;
        let (w, h) = c.dims();
        for y in 0..h {
            for x in 0..w {
                if f.labels.get(x, y) == CROP {
                    let d = f.row_lines_px.iter().map(|r| (x as f64 - r).abs()).fold(f64::INFINITY, f64::min);
                    assert!(d <= limit, "crop pixel ({x},{y}) is {d} px from a row");
                }
            }
        }
        for pair in f.row_lines_px.windows(2) {
            assert!((pair[1] - pair[0] - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_seed_identical_output() {
        assert_eq!(generate_field(&small(4)).unwrap(), generate_field(&small(4)).unwrap());
        assert_ne!(generate_field(&small(4)).unwrap(), generate_field(&small(5)).unwrap());
    }

    #[test]
    fn output_independent_of_thread_count() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| generate_field(&small(6)).unwrap());
        let b = four.install(|| generate_field(&small(6)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn weed_fraction_grows_with_density() {
        let fraction = |density: f64, seed: u64| {
            let c = FieldConfig {
                weed_density: density,
                ..small(seed)
            };
            let f = generate_field(&c).unwrap();
            f.labels.histogram(3)[2] as f64 / f.labels.labels().len() as f64
        };
        let mean = |density: f64| (0..4).map(|s| fraction(density, s)).sum::<f64>() / 4.0;
        let (lo, mid, hi) = (mean(1.0), mean(4.0), mean(12.0));
        assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
    }

    #[test]
    fn invalid_configs() {
        let c = FieldConfig {
            gsd_cm: 0.0,
            ..small(0)
        };
        assert!(matches!(generate_field(&c), Err(Error::ConfigInvalid(_))));
        let mut c = small(0);
        c.bands[0].crop = 1.5;
        assert!(matches!(generate_field(&c), Err(Error::ConfigInvalid(_))));
        let c = FieldConfig {
            row_spacing_m: 0.2,
            ..small(0)
        };
        assert!(matches!(generate_field(&c), Err(Error::ConfigInvalid(_))));
    }
}
