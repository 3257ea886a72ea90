use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_band_plane, Band, MultispectralRaster};
use crate::calib::CalibrationBlock;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Camera {
    RedEdgeM,
    Sequoia,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSize {
    pub w: usize,
    pub h: usize,
}

impl Default for TileSize {
    fn default() -> Self {
        Self { w: 480, h: 360 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandEntry {
    pub name: String,
    pub center_nm: f32,
    pub bandwidth_nm: f32,
    /// Band image, relative paths resolve against the manifest directory.
    pub path: PathBuf,
}

/// Declarative description of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub camera: Camera,
    pub gsd_cm: f64,
    pub tile: TileSize,
    pub bands: Vec<BandEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Directory the manifest was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn labels_path(&self) -> Option<PathBuf> {
        self.labels.as_deref().map(|p| self.resolve(p))
    }

    /// Dataset label: name of the manifest directory.
    pub fn origin(&self) -> String {
        self.base_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::EmptyBandList);
        }
        let mut names = HashSet::new();
        let mut paths = HashSet::new();
        for (i, b) in self.bands.iter().enumerate() {
            if !names.insert(&b.name) {
                return Err(Error::SchemaViolation(format!("bands[{i}].name: duplicate {:?}", b.name)));
            }
            if !paths.insert(&b.path) {
                return Err(Error::SchemaViolation(format!(
                    "bands[{i}].path: duplicate {}",
                    b.path.display()
                )));
            }
        }
        if self.tile.w == 0 {
            return Err(Error::SchemaViolation("tile.w: must be positive".into()));
        }
        if self.tile.h == 0 {
            return Err(Error::SchemaViolation("tile.h: must be positive".into()));
        }
        if !(self.gsd_cm > 0.0 && self.gsd_cm.is_finite()) {
            return Err(Error::SchemaViolation("gsd_cm: must be positive".into()));
        }
        if let Some(cal) = &self.calibration {
            cal.validate(self.bands.len())?;
        }
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.validate()?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Loads every band of the manifest, in manifest order.
pub fn load_raster(manifest: &DatasetManifest) -> Result<MultispectralRaster> {
    let mut bands = Vec::with_capacity(manifest.bands.len());
    for entry in &manifest.bands {
        let plane = load_band_plane(manifest.resolve(&entry.path))?;
        if let Some(first) = bands.first().map(|b: &Band| b.plane.dims()) {
            if plane.dims() != first {
                return Err(Error::DimensionMismatch(entry.name.clone()));
            }
        }
        bands.push(Band::new(&entry.name, entry.center_nm, entry.bandwidth_nm, plane)?);
    }
    MultispectralRaster::new(bands, manifest.gsd_cm, manifest.origin())
}
