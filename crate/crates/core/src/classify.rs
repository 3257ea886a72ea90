//! Per-tile classification: the classifier interface, an NDVI + crop-row
//! baseline, and ingestion of externally produced probability tiles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::{
    check_simplex, check_unit_range, read_probability_map, write_probability_map, Plane,
    ProbabilityMap, NORMALIZATION_EPS,
};
use crate::tiling::{Tile, TilingPlan};
use crate::{Error, Result, CLASS_COUNT};

/// Class probability planes for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TileProbabilities {
    pub grid_row: usize,
    pub grid_col: usize,
    pub planes: Vec<Plane>,
}

impl TileProbabilities {
    /// Checks equal plane sizes and the `[0, 1]` range. Normalization is
    /// checked separately with [`TileProbabilities::check_normalized`].
    pub fn new(grid_row: usize, grid_col: usize, planes: Vec<Plane>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::InvariantViolation("tile without class planes".into()));
        };
        let dims = first.dims();
        for p in &planes {
            if p.dims() != dims {
                return Err(Error::DimensionMismatch("class planes differ in size".into()));
            }
            check_unit_range(p.data())?;
        }
        Ok(Self {
            grid_row,
            grid_col,
            planes,
        })
    }

    /// Certain background over a `width x height` tile.
    pub fn background(grid_row: usize, grid_col: usize, width: usize, height: usize) -> Self {
        let m = ProbabilityMap::background(width, height, CLASS_COUNT);
        Self {
            grid_row,
            grid_col,
            planes: m.into_planes(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn check_normalized(&self, eps: f32) -> Result<()> {
        check_simplex(&self.planes, eps)
    }
}

/// A per-tile semantic classifier. Implementations are shared across the
/// tile worker pool.
pub trait TileClassifier: Send + Sync {
    fn classify(&self, tile: &Tile) -> Result<TileProbabilities>;
}

/// Runs a classifier on one tile and validates its output. Ineffective
/// (all-black) tiles are background without consulting the classifier.
pub fn classify_tile(classifier: &dyn TileClassifier, tile: &Tile) -> Result<TileProbabilities> {
    if !tile.effective {
        return Ok(TileProbabilities::background(
            tile.grid_row,
            tile.grid_col,
            tile.width(),
            tile.height(),
        ));
    }
    let out = classifier.classify(tile)?;
    if out.dims() != (tile.width(), tile.height()) {
        return Err(Error::ClassifierFailure(format!(
            "output {:?} does not match tile {}x{}",
            out.dims(),
            tile.width(),
            tile.height()
        )));
    }
    if (out.grid_row, out.grid_col) != (tile.grid_row, tile.grid_col) {
        return Err(Error::ClassifierFailure("output grid position differs from tile".into()));
    }
    out.check_normalized(NORMALIZATION_EPS)
        .map_err(|e| Error::ClassifierFailure(e.to_string()))?;
    Ok(out)
}

/// Parameters of the NDVI + crop-row baseline. Pixel quantities assume the
/// orthomosaic GSD (50 px rows at 1 cm/pixel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// NDVI at which vegetation probability is one half.
    pub ndvi_threshold: f32,
    /// Logistic steepness.
    pub steepness: f32,
    /// Expected crop-row period in pixels.
    pub row_spacing_px: f64,
    /// Width parameter of the Gaussian crop band around a row line.
    pub row_band_px: f64,
    /// Reserved for stochastic steps; the current baseline has none.
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ndvi_threshold: 0.4,
            steepness: 10.0,
            row_spacing_px: 50.0,
            row_band_px: 8.0,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ndvi_threshold > -1.0 && self.ndvi_threshold < 1.0) {
            return Err(Error::InvalidParams("ndvi_threshold must lie in (-1, 1)".into()));
        }
        if !(self.steepness > 0.0) {
            return Err(Error::InvalidParams("steepness must be positive".into()));
        }
        if !(self.row_spacing_px > 0.0) {
            return Err(Error::InvalidParams("row_spacing_px must be positive".into()));
        }
        if !(self.row_band_px > 0.0) {
            return Err(Error::InvalidParams("row_band_px must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn vegetation_probability(&self, ndvi: f32) -> f64 {
        let z = self.steepness as f64 * (ndvi as f64 - self.ndvi_threshold as f64);
        1.0 / (1.0 + (-z).exp())
    }
}

/// Sub-pixel resolution of the row phase search.
const PHASE_STEP: f64 = 0.25;

fn wrapped_distance(x: f64, phase: f64, period: f64) -> f64 {
    let m = (x - phase).rem_euclid(period);
    m.min(period - m)
}

/// Finds crop-row lines (x offsets) in an NDVI plane.
///
/// Columns are projected onto a vegetation count profile; a periodic comb
/// with the configured spacing is fitted to it, and each comb line is then
/// pulled to the centroid of the profile within `row_band_px`.
pub fn detect_rows(ndvi: &Plane, config: &BaselineConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let (width, height) = ndvi.dims();
    if width == 0 || height == 0 {
        return Err(Error::NoRowsFound);
    }
    let mut profile = vec![0.0f64; width];
    for y in 0..height {
        for (p, &v) in profile.iter_mut().zip(ndvi.row(y)) {
            if v > config.ndvi_threshold {
                *p += 1.0;
            }
        }
    }
    if profile.iter().all(|&p| p == 0.0) {
        return Err(Error::NoRowsFound);
    }

    let period = config.row_spacing_px;
    let sigma2 = 2.0 * config.row_band_px * config.row_band_px;
    let steps = (period / PHASE_STEP).ceil() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..steps {
        let phase = k as f64 * PHASE_STEP;
        let score: f64 = profile
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, &p)| {
                let d = wrapped_distance(x as f64, phase, period);
                p * (-d * d / sigma2).exp()
            })
            .sum();
        if score > best.0 {
            best = (score, phase);
        }
    }

    let half = config.row_band_px;
    let mut rows = Vec::new();
    let mut line = best.1;
    while line < width as f64 {
        let mut center = line;
        for _ in 0..2 {
            // Lines whose window is cut by the tile edge keep the comb position.
            if center - half < 0.0 || center + half > (width - 1) as f64 {
                break;
            }
            let lo = (center - half).ceil() as usize;
            let hi = (center + half).floor() as usize;
            let (mut mass, mut moment) = (0.0, 0.0);
            for (x, &p) in profile.iter().enumerate().take(hi + 1).skip(lo) {
                mass += p;
                moment += p * x as f64;
            }
            if mass > 0.0 {
                center = moment / mass;
            }
        }
        if (0.0..width as f64).contains(&center) {
            rows.push(center);
        }
        line += period;
    }
    Ok(rows)
}

/// Baseline class probabilities from the tile's NDVI plane and row lines.
///
/// `p_veg = sigmoid(k (NDVI - tau))`, the crop share of vegetation decays as
/// a Gaussian of the distance to the nearest row line, the rest is weed.
pub fn baseline_probabilities(
    tile: &Tile,
    ndvi_channel: usize,
    rows: &[f64],
    config: &BaselineConfig,
) -> Result<TileProbabilities> {
    let ndvi = tile.planes.get(ndvi_channel).ok_or_else(|| {
        Error::ClassifierFailure(format!("tile has no channel {ndvi_channel}"))
    })?;
    let (w, h) = ndvi.dims();
    let sigma2 = 2.0 * config.row_band_px * config.row_band_px;
    let crop_share: Vec<f64> = (0..w)
        .map(|x| {
            rows.iter()
                .map(|r| (x as f64 - r).abs())
                .min_by(f64::total_cmp)
                .map_or(0.0, |d| (-d * d / sigma2).exp())
        })
        .collect();
    let mut planes = vec![Plane::zeros(w, h); CLASS_COUNT];
    for y in 0..h {
        for x in 0..w {
            let veg = config.vegetation_probability(ndvi.get(x, y));
            let crop = veg * crop_share[x];
            let probs = [1.0 - veg, crop, veg - crop];
            let sum: f64 = probs.iter().sum();
            for (plane, p) in planes.iter_mut().zip(probs) {
                plane.set(x, y, (p / sum) as f32);
            }
        }
    }
    TileProbabilities::new(tile.grid_row, tile.grid_col, planes)
}

/// NDVI thresholding with a periodic crop-row prior.
#[derive(Debug, Clone)]
pub struct BaselineClassifier {
    config: BaselineConfig,
    ndvi_channel: usize,
}

impl BaselineClassifier {
    /// `channels` are the tile channel names; one must be the NDVI channel.
    pub fn new(config: BaselineConfig, channels: &[String]) -> Result<Self> {
        config.validate()?;
        let ndvi_channel = channels
            .iter()
            .position(|c| c == crate::compose::NDVI_CHANNEL)
            .ok_or_else(|| Error::ClassifierFailure("tiles carry no NDVI channel".into()))?;
        Ok(Self {
            config,
            ndvi_channel,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }
}

impl TileClassifier for BaselineClassifier {
    fn classify(&self, tile: &Tile) -> Result<TileProbabilities> {
        let ndvi = tile
            .planes
            .get(self.ndvi_channel)
            .ok_or_else(|| Error::ClassifierFailure("tile misses the NDVI channel".into()))?;
        let rows = match detect_rows(ndvi, &self.config) {
            Ok(rows) => rows,
            Err(Error::NoRowsFound) => Vec::new(),
            Err(e) => return Err(e),
        };
        baseline_probabilities(tile, self.ndvi_channel, &rows, &self.config)
    }
}

fn parse_tile_stem(stem: &str) -> Option<(usize, usize)> {
    let (r, c) = stem.strip_prefix('r')?.split_once("_c")?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(r) || !digits(c) {
        return None;
    }
    Some((r.parse().ok()?, c.parse().ok()?))
}

pub fn prediction_path(dir: &Path, row: usize, col: usize) -> PathBuf {
    dir.join(format!("{}.wmap", TilingPlan::tile_stem(row, col)))
}

/// Writes a probability tile as `r{row}_c{col}.wmap` under `dir`.
pub fn write_prediction(dir: &Path, tile: &TileProbabilities) -> Result<PathBuf> {
    let path = prediction_path(dir, tile.grid_row, tile.grid_col);
    let (w, h) = tile.dims();
    let map = ProbabilityMap::from_planes_unchecked(w, h, tile.planes.clone());
    write_probability_map(&map, &path)?;
    Ok(path)
}

/// Reads every `r{row}_c{col}.wmap` probability tile in `dir`, validated
/// against the plan, sorted row-major.
pub fn ingest_predictions(dir: impl AsRef<Path>, plan: &TilingPlan) -> Result<Vec<TileProbabilities>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "wmap"));
    paths.sort();

    let mut tiles = Vec::with_capacity(paths.len());
    for path in paths {
        let malformed = |reason: String| Error::MalformedPrediction {
            path: path.clone(),
            reason,
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (row, col) =
            parse_tile_stem(stem).ok_or_else(|| malformed("name is not r{row}_c{col}".into()))?;
        if !plan.contains(row, col) {
            return Err(Error::GridMismatch {
                row,
                col,
                rows: plan.tile_rows,
                cols: plan.tile_cols,
            });
        }
        let map = read_probability_map(&path).map_err(|e| malformed(e.to_string()))?;
        if map.class_count() != CLASS_COUNT {
            return Err(malformed(format!("{} classes, expected {CLASS_COUNT}", map.class_count())));
        }
        if (map.width(), map.height()) != (plan.tile_width, plan.tile_height) {
            return Err(malformed(format!(
                "{}x{} tile, plan uses {}x{}",
                map.width(),
                map.height(),
                plan.tile_width,
                plan.tile_height
            )));
        }
        map.check_normalized(NORMALIZATION_EPS)
            .map_err(|e| malformed(e.to_string()))?;
        tiles.push(TileProbabilities {
            grid_row: row,
            grid_col: col,
            planes: map.into_planes(),
        });
    }
    tiles.sort_by_key(|t| (t.grid_row, t.grid_col));
    Ok(tiles)
}
