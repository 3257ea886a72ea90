//! Command-line surface: one subcommand per pipeline stage plus `pipeline`,
//! which runs calibrate → compose → tile → infer → assemble → eval with
//! every intermediate artifact persisted under `--out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use image::{Rgb, RgbImage};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::calibrate_band;
use crate::classify::{
    classify_tile, ingest_predictions, write_prediction, BaselineClassifier, BaselineConfig,
};
use crate::compose::{build_stack, Channel, ChannelStack, Preset, NDVI_CHANNEL};
use crate::eval::{argmax_labels, evaluate_map, Report};
use crate::raster::{
    decode_raw_plane, load_manifest, load_raster, read_label_png, read_plane_stack,
    read_probability_map, write_manifest, write_plane_stack, write_png_u8, write_probability_map,
    Camera, LabelMap, Plane,
};
use crate::stats::{class_weights, compute_foa, covered_area, theoretical_gsd};
use crate::synth::{generate_field, write_dataset, FieldConfig};
use crate::tiling::{extract_tile_row, plan_tiling, Assembler, Tile, TilingPlan};
use crate::{Error, Result, CLASS_COUNT, CLASS_NAMES};

/// Display colors for bg, crop, weed.
pub const CLASS_COLORS: [[u8; 3]; CLASS_COUNT] = [[0, 0, 255], [0, 255, 0], [255, 0, 0]];

#[derive(Parser, Debug)]
#[command(name = "weedmap", version, about = "Multispectral orthomosaic weed mapping")]
struct Cli {
    /// Size of the worker pool for tile-parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert raw band counts to reflectance using the manifest calibration block.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the channel stack (NDVI, RGB, CIR composites).
    Compose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut a channel stack into tiles.
    Tile {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 480)]
        tile_w: usize,
        #[arg(long, default_value_t = 360)]
        tile_h: usize,
        /// Only print the tiling plan.
        #[arg(long)]
        plan_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce per-tile class probabilities.
    Infer {
        /// Tile directory or its plan.json.
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long, value_enum, default_value = "baseline")]
        backend: Backend,
        /// External prediction directory for the ingest backend.
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        /// Baseline configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reassemble probability tiles into a full-field map and weed map.
    Assemble {
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a probability map against a label map.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class frequencies, balancing weights, GSD and covered area.
    Stats {
        #[arg(long = "labels", required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        gsd_cm: Option<f64>,
        #[arg(long, requires_all = ["focal_mm", "altitude_m"])]
        pixel_um: Option<f64>,
        #[arg(long)]
        focal_mm: Option<f64>,
        #[arg(long)]
        altitude_m: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic field with ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write raw sensor counts plus a calibration block.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "baseline")]
        backend: Backend,
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Baseline,
    Ingest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Rededge12,
    Sequoia8,
    Custom,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Rededge12 => Preset::RedEdge12,
            PresetArg::Sequoia8 => Preset::Sequoia8,
            PresetArg::Custom => Preset::Custom,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 2 on usage errors, 1 on stage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("WEEDMAP_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stage = stage_name(&cli.command);
    let result = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(Error::InvalidParams(e.to_string())),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let line = serde_json::json!({
                "error": {"stage": stage, "kind": e.kind(), "message": e.to_string()}
            });
            eprintln!("{line}");
            1
        }
    }
}

fn stage_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Calibrate { .. } => "calibrate",
        Command::Compose { .. } => "compose",
        Command::Tile { .. } => "tile",
        Command::Infer { .. } => "infer",
        Command::Assemble { .. } => "assemble",
        Command::Eval { .. } => "eval",
        Command::Stats { .. } => "stats",
        Command::Synth { .. } => "synth",
        Command::Pipeline { .. } => "pipeline",
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Calibrate { manifest, out } => {
            stage_calibrate(&manifest, &out)?;
        }
        Command::Compose {
            manifest,
            preset,
            out,
        } => {
            stage_compose(&manifest, preset.map(Preset::from), &out)?;
        }
        Command::Tile {
            stack,
            tile_w,
            tile_h,
            plan_only,
            out,
        } => {
            if plan_only {
                let s = read_json::<StackManifest>(&stack)?;
                let plan = plan_tiling(s.width, s.height, tile_w, tile_h)?;
                println!("{}", plan_line(&plan));
            } else {
                let out = out.ok_or_else(|| Error::InvalidParams("--out is required".into()))?;
                let index = stage_tile(&stack, tile_w, tile_h, &out)?;
                println!("{}", plan_line(&index.plan));
                println!("effective {}/{}", index.effective_count(), index.plan.tile_count());
            }
        }
        Command::Infer {
            tiles,
            backend,
            pred_dir,
            config,
            out,
        } => {
            let config = load_baseline_config(config.as_deref())?;
            stage_infer(&tiles, backend, pred_dir.as_deref(), &config, &out)?;
        }
        Command::Assemble {
            tiles,
            pred_dir,
            out,
        } => {
            stage_assemble(&tiles, &pred_dir, &out)?;
        }
        Command::Eval { gt, pred, out } => {
            let report = stage_eval(&gt, &pred, &out)?;
            print_summary(&report);
        }
        Command::Stats {
            labels,
            manifest,
            gsd_cm,
            pixel_um,
            focal_mm,
            altitude_m,
            out,
        } => {
            let gsd = match (pixel_um, focal_mm, altitude_m, gsd_cm, manifest) {
                (Some(p), Some(f), Some(a), _, _) => theoretical_gsd(p, f, a)?,
                (_, _, _, Some(g), _) => g,
                (_, _, _, _, Some(m)) => load_manifest(&m)?.gsd_cm,
                _ => {
                    return Err(Error::InvalidParams(
                        "provide --gsd-cm, --manifest or --pixel-um/--focal-mm/--altitude-m".into(),
                    ))
                }
            };
            let report = dataset_stats(&labels, gsd)?;
            let text = serde_json::to_string_pretty(&report).expect("stats serialize");
            if let Some(out) = out {
                std::fs::write(out, format!("{text}\n"))?;
            }
            println!("{text}");
        }
        Command::Synth {
            config,
            seed,
            raw,
            out,
        } => {
            let mut cfg: FieldConfig = match config {
                Some(path) => read_json(&path)?,
                None => FieldConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let field = generate_field(&cfg)?;
            let manifest = write_dataset(&field, &out, raw)?;
            println!("{}", manifest.display());
        }
        Command::Pipeline {
            manifest,
            backend,
            pred_dir,
            config,
            preset,
            out,
        } => {
            let config = load_baseline_config(config.as_deref())?;
            let outcome = run_pipeline(
                &manifest,
                &PipelineOptions {
                    backend,
                    pred_dir,
                    config,
                    preset: preset.map(Preset::from),
                },
                &out,
            )?;
            if let Some(report) = &outcome.report {
                print_summary(report);
            }
        }
    }
    Ok(())
}

fn plan_line(plan: &TilingPlan) -> String {
    format!(
        "grid {}x{} pad {}/{}",
        plan.tile_rows, plan.tile_cols, plan.pad_rows, plan.pad_cols
    )
}

fn print_summary(report: &Report) {
    for c in &report.classes {
        match c.auc {
            Some(a) => println!("auc {} {a:.4}", c.name),
            None => println!("auc {} n/a", c.name),
        }
    }
    println!(
        "pa {:.4} mpa {:.4} miou {:.4} fwiou {:.4}",
        report.pa, report.mpa, report.miou, report.fwiou
    );
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::SchemaViolation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn load_baseline_config(path: Option<&Path>) -> Result<BaselineConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => BaselineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn relative_to(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Calibrates every band of a manifest with a calibration block and writes
/// reflectance planes plus a calibration-free manifest under `out`.
pub fn stage_calibrate(manifest_path: &Path, out: &Path) -> Result<PathBuf> {
    let manifest = load_manifest(manifest_path)?;
    let cal = manifest
        .calibration
        .clone()
        .ok_or_else(|| Error::SchemaViolation("calibration: block missing".into()))?;
    let params = cal.params();
    std::fs::create_dir_all(out)?;
    let mut calibrated = manifest.clone();
    calibrated.calibration = None;
    calibrated.labels = manifest.labels_path().map(|p| absolute(&p));
    calibrated.base_dir = out.to_path_buf();
    for (i, entry) in manifest.bands.iter().enumerate() {
        let raw = decode_raw_plane(manifest.resolve(&entry.path))?;
        let panel = decode_raw_plane(manifest.resolve(Path::new(&cal.panel_image(&entry.name))))?;
        let f_k = crate::calib::reflectance_factor(&panel, &cal.panel_spec(i), &params)?;
        info!("band {}: reflectance factor {f_k:.6}", entry.name);
        let plane = calibrate_band(&raw, &params, f_k)?;
        let file = format!("{}.wmap", entry.name);
        write_plane_stack(&[plane], out.join(&file))?;
        calibrated.bands[i].path = file.into();
    }
    let path = out.join("manifest.json");
    write_manifest(&calibrated, &path)?;
    Ok(path)
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Channel stack description written by `compose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub preset: Preset,
    pub width: usize,
    pub height: usize,
    pub gsd_cm: f64,
    pub channels: Vec<StackChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackChannel {
    pub name: String,
    pub path: PathBuf,
}

fn default_preset(camera: Camera) -> Preset {
    match camera {
        Camera::RedEdgeM => Preset::RedEdge12,
        Camera::Sequoia => Preset::Sequoia8,
        Camera::Custom => Preset::Custom,
    }
}

/// Builds the channel stack and writes one plane file per channel, an
/// 8-bit NDVI preview and `stack.json`.
pub fn stage_compose(manifest_path: &Path, preset: Option<Preset>, out: &Path) -> Result<PathBuf> {
    let manifest = load_manifest(manifest_path)?;
    if manifest.calibration.is_some() {
        warn!("manifest carries a calibration block; composing uncalibrated bands");
    }
    let raster = load_raster(&manifest)?;
    let preset = preset.unwrap_or_else(|| default_preset(manifest.camera));
    let stack = build_stack(&raster, preset)?;
    std::fs::create_dir_all(out)?;
    let mut channels = Vec::with_capacity(stack.len());
    for channel in stack.channels() {
        let file = PathBuf::from(format!("{}.wmap", channel.name));
        write_plane_stack(std::slice::from_ref(&channel.plane), out.join(&file))?;
        channels.push(StackChannel {
            name: channel.name.clone(),
            path: file,
        });
    }
    if let Some(ndvi) = stack.channel(NDVI_CHANNEL) {
        write_png_u8(ndvi, -1.0, 1.0, out.join("ndvi.png"))?;
    }
    let path = out.join("stack.json");
    write_json(
        &StackManifest {
            preset,
            width: stack.width(),
            height: stack.height(),
            gsd_cm: raster.gsd_cm,
            channels,
        },
        &path,
    )?;
    Ok(path)
}

pub fn load_stack(stack_json: &Path) -> Result<(StackManifest, ChannelStack)> {
    let manifest: StackManifest = read_json(stack_json)?;
    let base = stack_json.parent().unwrap_or(Path::new("."));
    let mut channels = Vec::with_capacity(manifest.channels.len());
    for c in &manifest.channels {
        let path = relative_to(base, &c.path);
        let mut planes = read_plane_stack(&path)?;
        if planes.len() != 1 {
            return Err(Error::Decode {
                path,
                reason: "channel file must hold one plane".into(),
            });
        }
        channels.push(Channel {
            name: c.name.clone(),
            plane: planes.pop().unwrap(),
        });
    }
    let stack = ChannelStack::new(manifest.preset, channels)?;
    if (stack.width(), stack.height()) != (manifest.width, manifest.height) {
        return Err(Error::DimensionMismatch("stack.json size differs from planes".into()));
    }
    Ok((manifest, stack))
}

/// Tile directory index (`plan.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileIndex {
    pub plan: TilingPlan,
    pub channels: Vec<String>,
    pub gsd_cm: f64,
    pub tiles: Vec<TileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub row: usize,
    pub col: usize,
    pub effective: bool,
}

impl TileIndex {
    pub fn effective_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.effective).count()
    }
}

/// Cuts the stack into tiles, writing `r{row}_c{col}.wmap` for effective
/// tiles and `plan.json`.
pub fn stage_tile(stack_json: &Path, tile_w: usize, tile_h: usize, out: &Path) -> Result<TileIndex> {
    let (manifest, stack) = load_stack(stack_json)?;
    let plan = plan_tiling(stack.width(), stack.height(), tile_w, tile_h)?;
    std::fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(plan.tile_count());
    for row in 0..plan.tile_rows {
        let tiles = extract_tile_row(&stack, &plan, row)?;
        tiles
            .par_iter()
            .filter(|t| t.effective)
            .try_for_each(|t| write_plane_stack(&t.planes, tile_path(out, t.grid_row, t.grid_col)))?;
        entries.extend(tiles.iter().map(|t| TileEntry {
            row: t.grid_row,
            col: t.grid_col,
            effective: t.effective,
        }));
    }
    let index = TileIndex {
        plan,
        channels: stack.names(),
        gsd_cm: manifest.gsd_cm,
        tiles: entries,
    };
    write_json(&index, &out.join("plan.json"))?;
    Ok(index)
}

fn tile_path(dir: &Path, row: usize, col: usize) -> PathBuf {
    dir.join(format!("{}.wmap", TilingPlan::tile_stem(row, col)))
}

fn index_path(tiles: &Path) -> PathBuf {
    if tiles.is_dir() {
        tiles.join("plan.json")
    } else {
        tiles.to_path_buf()
    }
}

/// Classifies every effective tile (or ingests external predictions) and
/// writes probability tiles under `out`.
pub fn stage_infer(
    tiles: &Path,
    backend: Backend,
    pred_dir: Option<&Path>,
    config: &BaselineConfig,
    out: &Path,
) -> Result<usize> {
    let index_file = index_path(tiles);
    let index: TileIndex = read_json(&index_file)?;
    let tile_dir = index_file.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out)?;
    match backend {
        Backend::Baseline => {
            let classifier = BaselineClassifier::new(config.clone(), &index.channels)?;
            let effective: Vec<&TileEntry> = index.tiles.iter().filter(|t| t.effective).collect();
            effective.par_iter().try_for_each(|entry| -> Result<()> {
                let planes = read_plane_stack(tile_path(tile_dir, entry.row, entry.col))?;
                let tile = Tile {
                    grid_row: entry.row,
                    grid_col: entry.col,
                    planes,
                    effective: true,
                };
                let probs = classify_tile(&classifier, &tile)?;
                write_prediction(out, &probs)?;
                Ok(())
            })?;
            Ok(effective.len())
        }
        Backend::Ingest => {
            let src = pred_dir
                .ok_or_else(|| Error::InvalidParams("--pred-dir is required for ingest".into()))?;
            let tiles = ingest_predictions(src, &index.plan)?;
            for t in &tiles {
                write_prediction(out, t)?;
            }
            Ok(tiles.len())
        }
    }
}

/// Reassembles the probability tiles into `probmap.wmap` and the colorized
/// `weedmap.png`.
pub fn stage_assemble(tiles: &Path, pred_dir: &Path, out: &Path) -> Result<PathBuf> {
    let index: TileIndex = read_json(&index_path(tiles))?;
    let predictions = ingest_predictions(pred_dir, &index.plan)?;
    let mut assembler = Assembler::new(index.plan, CLASS_COUNT);
    for t in &predictions {
        assembler.insert(t)?;
    }
    let map = assembler.finish();
    std::fs::create_dir_all(out)?;
    let path = out.join("probmap.wmap");
    write_probability_map(&map, &path)?;
    export_colorized(&argmax_labels(&map), &out.join("weedmap.png"))?;
    Ok(path)
}

pub fn stage_eval(gt: &Path, pred: &Path, out: &Path) -> Result<Report> {
    let labels = read_label_png(gt)?;
    let map = read_probability_map(pred)?;
    let report = evaluate_map(&map, &labels, &CLASS_NAMES)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_json(&report, out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub foa: Vec<f64>,
    pub weights: Vec<f64>,
    pub gsd_cm: f64,
    pub area_ha: f64,
}

pub fn dataset_stats(label_paths: &[PathBuf], gsd_cm: f64) -> Result<DatasetStats> {
    let maps = label_paths
        .iter()
        .map(read_label_png)
        .collect::<Result<Vec<LabelMap>>>()?;
    let freq = compute_foa(&maps, CLASS_COUNT)?;
    let weights = class_weights(&freq)?;
    let mut area_ha = 0.0;
    for m in &maps {
        area_ha += covered_area(m, gsd_cm)?;
    }
    Ok(DatasetStats {
        foa: freq.foa,
        weights: weights.weights,
        gsd_cm,
        area_ha,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub backend: Backend,
    pub pred_dir: Option<PathBuf>,
    pub config: BaselineConfig,
    pub preset: Option<Preset>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Baseline,
            pred_dir: None,
            config: BaselineConfig::default(),
            preset: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub plan: TilingPlan,
    pub probmap: PathBuf,
    pub weedmap: PathBuf,
    pub report: Option<Report>,
}

/// Runs calibrate (when the manifest has a calibration block), compose,
/// tile, infer, assemble and eval (when the manifest names labels).
pub fn run_pipeline(manifest_path: &Path, options: &PipelineOptions, out: &Path) -> Result<PipelineOutcome> {
    let manifest = load_manifest(manifest_path)?;
    std::fs::create_dir_all(out)?;
    let mut current = manifest_path.to_path_buf();
    if manifest.calibration.is_some() {
        info!("calibrate");
        current = stage_calibrate(&current, &out.join("reflectance"))?;
    }
    info!("compose");
    let stack = stage_compose(&current, options.preset, &out.join("stack"))?;
    info!("tile");
    let tiles_dir = out.join("tiles");
    let index = stage_tile(&stack, manifest.tile.w, manifest.tile.h, &tiles_dir)?;
    info!(
        "{} effective of {} tiles",
        index.effective_count(),
        index.plan.tile_count()
    );
    info!("infer");
    let pred_dir = out.join("pred");
    if pred_dir.exists() {
        std::fs::remove_dir_all(&pred_dir)?;
    }
    stage_infer(
        &tiles_dir,
        options.backend,
        options.pred_dir.as_deref(),
        &options.config,
        &pred_dir,
    )?;
    info!("assemble");
    let probmap = stage_assemble(&tiles_dir, &pred_dir, out)?;
    let report = match manifest.labels_path() {
        Some(gt) => {
            info!("eval");
            Some(stage_eval(&gt, &probmap, &out.join("report.json"))?)
        }
        None => {
            warn!("manifest has no labels; skipping evaluation");
            None
        }
    };
    Ok(PipelineOutcome {
        plan: index.plan,
        probmap,
        weedmap: out.join("weedmap.png"),
        report,
    })
}

/// Writes a label map as an RGB PNG using [`CLASS_COLORS`].
pub fn export_colorized(labels: &LabelMap, path: &Path) -> Result<()> {
    let mut img = RgbImage::new(labels.width() as u32, labels.height() as u32);
    for (px, &l) in img.pixels_mut().zip(labels.labels()) {
        *px = Rgb(CLASS_COLORS[l as usize]);
    }
    img.save(path).map_err(crate::raster::image_error)
}

/// Inverse of [`export_colorized`]; pixels of any other color are rejected.
pub fn decolorize(path: &Path) -> Result<LabelMap> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    let labels = img
        .pixels()
        .map(|p| {
            CLASS_COLORS
                .iter()
                .position(|c| c == &p.0)
                .map(|l| l as u8)
                .ok_or_else(|| Error::Decode {
                    path: path.to_path_buf(),
                    reason: format!("color {:?} is not a class color", p.0),
                })
        })
        .collect::<Result<Vec<u8>>>()?;
    LabelMap::new(img.width() as usize, img.height() as usize, labels, CLASS_COUNT)
}

/// Class labels painted into a plane, handy for previews.
pub fn labels_to_plane(labels: &LabelMap) -> Plane {
    Plane::from_fn(labels.width(), labels.height(), |x, y| labels.get(x, y) as f32)
}
