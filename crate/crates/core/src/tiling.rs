//! Sliding-window tiling of channel stacks and reassembly of per-tile
//! probability maps.
//!
//! The map is padded with zeros on the right and bottom edges so that it
//! divides evenly into tiles; tile `(0, 0)` is anchored at the map origin and
//! tiles are enumerated row-major.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::TileProbabilities;
use crate::compose::ChannelStack;
use crate::raster::{Plane, ProbabilityMap};
use crate::{Error, Result, CLASS_COUNT};

pub const DEFAULT_TILE_WIDTH: usize = 480;
pub const DEFAULT_TILE_HEIGHT: usize = 360;

/// Grid geometry mapping tile indices to map pixel rectangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub map_width: usize,
    pub map_height: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    /// Number of tiles stacked vertically.
    pub tile_rows: usize,
    /// Number of tiles side by side horizontally.
    pub tile_cols: usize,
    /// Zero rows appended at the bottom.
    pub pad_rows: usize,
    /// Zero columns appended on the right.
    pub pad_cols: usize,
}

/// Valid (non-padding) part of a tile in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

pub fn plan_tiling(map_w: usize, map_h: usize, tile_w: usize, tile_h: usize) -> Result<TilingPlan> {
    if map_w == 0 || map_h == 0 || tile_w == 0 || tile_h == 0 {
        return Err(Error::ZeroDimension);
    }
    let tile_rows = map_h.div_ceil(tile_h);
    let tile_cols = map_w.div_ceil(tile_w);
    Ok(TilingPlan {
        map_width: map_w,
        map_height: map_h,
        tile_width: tile_w,
        tile_height: tile_h,
        tile_rows,
        tile_cols,
        pad_rows: tile_rows * tile_h - map_h,
        pad_cols: tile_cols * tile_w - map_w,
    })
}

impl TilingPlan {
    pub fn tile_count(&self) -> usize {
        self.tile_rows * self.tile_cols
    }

    pub fn padded_width(&self) -> usize {
        self.tile_cols * self.tile_width
    }

    pub fn padded_height(&self) -> usize {
        self.tile_rows * self.tile_height
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.tile_rows && col < self.tile_cols
    }

    pub fn cell_rect(&self, row: usize, col: usize) -> CellRect {
        debug_assert!(self.contains(row, col));
        let x = col * self.tile_width;
        let y = row * self.tile_height;
        CellRect {
            x,
            y,
            w: self.tile_width.min(self.map_width - x),
            h: self.tile_height.min(self.map_height - y),
        }
    }

    /// Grid cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.tile_rows).flat_map(move |r| (0..self.tile_cols).map(move |c| (r, c)))
    }

    /// File stem used for per-tile artifacts.
    pub fn tile_stem(row: usize, col: usize) -> String {
        format!("r{row}_c{col}")
    }
}

/// One window of the padded stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub grid_row: usize,
    pub grid_col: usize,
    pub planes: Vec<Plane>,
    /// True when any sample of any plane is positive.
    pub effective: bool,
}

impl Tile {
    pub fn width(&self) -> usize {
        self.planes.first().map_or(0, Plane::width)
    }

    pub fn height(&self) -> usize {
        self.planes.first().map_or(0, Plane::height)
    }
}

/// Cuts cell `(row, col)` out of map-sized planes, zero-filling padding.
pub fn extract_tile(planes: &[&Plane], plan: &TilingPlan, row: usize, col: usize) -> Result<Tile> {
    if !plan.contains(row, col) {
        return Err(Error::OutOfRangeIndex(row, col));
    }
    let rect = plan.cell_rect(row, col);
    let mut effective = false;
    let tiles = planes
        .iter()
        .map(|src| {
            if src.dims() != (plan.map_width, plan.map_height) {
                return Err(Error::DimensionMismatch(format!(
                    "plane {}x{} vs plan {}x{}",
                    src.width(),
                    src.height(),
                    plan.map_width,
                    plan.map_height
                )));
            }
            let mut tile = Plane::zeros(plan.tile_width, plan.tile_height);
            for dy in 0..rect.h {
                let from = &src.row(rect.y + dy)[rect.x..rect.x + rect.w];
                effective |= from.iter().any(|&v| v > 0.0);
                tile.row_mut(dy)[..rect.w].copy_from_slice(from);
            }
            Ok(tile)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tile {
        grid_row: row,
        grid_col: col,
        planes: tiles,
        effective,
    })
}

fn check_stack(stack: &ChannelStack, plan: &TilingPlan) -> Result<()> {
    if (stack.width(), stack.height()) != (plan.map_width, plan.map_height) {
        return Err(Error::DimensionMismatch(format!(
            "stack {}x{} vs plan {}x{}",
            stack.width(),
            stack.height(),
            plan.map_width,
            plan.map_height
        )));
    }
    Ok(())
}

/// All tiles of one grid row, extracted in parallel, ordered by column.
pub fn extract_tile_row(stack: &ChannelStack, plan: &TilingPlan, row: usize) -> Result<Vec<Tile>> {
    check_stack(stack, plan)?;
    let planes: Vec<&Plane> = stack.planes().collect();
    (0..plan.tile_cols)
        .into_par_iter()
        .map(|col| extract_tile(&planes, plan, row, col))
        .collect()
}

/// Every tile of the plan in row-major order.
pub fn extract_tiles(stack: &ChannelStack, plan: &TilingPlan) -> Result<Vec<Tile>> {
    check_stack(stack, plan)?;
    let planes: Vec<&Plane> = stack.planes().collect();
    let cells: Vec<_> = plan.cells().collect();
    cells
        .into_par_iter()
        .map(|(r, c)| extract_tile(&planes, plan, r, c))
        .collect()
}

/// Incremental reassembly of probability tiles into a full map. Cells that
/// never receive a tile stay background with probability 1.
pub struct Assembler {
    plan: TilingPlan,
    planes: Vec<Plane>,
    seen: Vec<bool>,
}

impl Assembler {
    pub fn new(plan: TilingPlan, class_count: usize) -> Self {
        let (w, h) = (plan.map_width, plan.map_height);
        let mut planes = Vec::with_capacity(class_count);
        for c in 0..class_count {
            planes.push(if c == 0 { Plane::filled(w, h, 1.0) } else { Plane::zeros(w, h) });
        }
        Self {
            plan,
            planes,
            seen: vec![false; plan.tile_count()],
        }
    }

    pub fn insert(&mut self, tile: &TileProbabilities) -> Result<()> {
        let (row, col) = (tile.grid_row, tile.grid_col);
        if !self.plan.contains(row, col) {
            return Err(Error::OutOfRangeIndex(row, col));
        }
        let slot = row * self.plan.tile_cols + col;
        if self.seen[slot] {
            return Err(Error::DuplicateGridCell(row, col));
        }
        if tile.planes.len() != self.planes.len() {
            return Err(Error::DimensionMismatch(format!(
                "tile ({row}, {col}) has {} classes, map has {}",
                tile.planes.len(),
                self.planes.len()
            )));
        }
        if tile
            .planes
            .iter()
            .any(|p| p.dims() != (self.plan.tile_width, self.plan.tile_height))
        {
            return Err(Error::DimensionMismatch(format!(
                "tile ({row}, {col}) is not {}x{}",
                self.plan.tile_width, self.plan.tile_height
            )));
        }
        let rect = self.plan.cell_rect(row, col);
        for (dst, src) in self.planes.iter_mut().zip(&tile.planes) {
            for dy in 0..rect.h {
                dst.row_mut(rect.y + dy)[rect.x..rect.x + rect.w].copy_from_slice(&src.row(dy)[..rect.w]);
            }
        }
        self.seen[slot] = true;
        Ok(())
    }

    pub fn finish(self) -> ProbabilityMap {
        ProbabilityMap::from_planes_unchecked(self.plan.map_width, self.plan.map_height, self.planes)
    }
}

/// Reassembles tiles (in any order) and crops the padding away.
pub fn assemble(
    plan: &TilingPlan,
    tiles: impl IntoIterator<Item = TileProbabilities>,
) -> Result<ProbabilityMap> {
    let mut tiles = tiles.into_iter().peekable();
    let classes = tiles.peek().map_or(CLASS_COUNT, |t| t.planes.len());
    let mut assembler = Assembler::new(*plan, classes);
    for tile in tiles {
        assembler.insert(&tile)?;
    }
    Ok(assembler.finish())
}
