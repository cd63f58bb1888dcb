use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::{PixelRect, Window};

pub const DEFAULT_TILE_PX: usize = 256;
pub const DEFAULT_OVERLAP: f64 = 0.8;

/// Square tiles of side `tile_px` laid out on a (possibly jittered) product
/// grid of row and column offsets. Tiles never leave the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub tile_px: usize,
    pub overlap: f64,
    pub jitter_seed: Option<u64>,
    /// Top offsets, in nominal order.
    pub rows: Vec<usize>,
    /// Left offsets, in nominal order.
    pub cols: Vec<usize>,
}

/// `round(tile_px * (1 - overlap))`, at least 1.
pub fn stride_for(tile_px: usize, overlap: f64) -> usize {
    ((tile_px as f64 * (1.0 - overlap)).round() as usize).max(1)
}

/// Nominal offsets `0, s, 2s, ...` while the tile fits, plus a final tile
/// flush with the far edge.
fn nominal_positions(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..).map(|k| k * stride).take_while(|p| p + tile <= len).collect();
    let last = len - tile;
    if *pos.last().expect("tile fits") != last {
        pos.push(last);
    }
    pos
}

/// Largest jitter that keeps consecutive tiles touching.
fn jitter_bound(tile: usize, stride: usize) -> usize {
    (stride / 2).min(tile.saturating_sub(stride) / 2)
}

/// Jitters interior offsets by independent uniform integers in
/// `[-bound, bound]`; the first and last tiles stay on the image edges.
fn jitter(pos: &mut [usize], len: usize, tile: usize, bound: usize, rng: &mut ChaCha8Rng) {
    if pos.len() <= 2 || bound == 0 {
        return;
    }
    let max = (len - tile) as i64;
    let n = pos.len();
    for p in &mut pos[1..n - 1] {
        let off = rng.random_range(-(bound as i64)..=bound as i64);
        *p = (*p as i64 + off).clamp(0, max) as usize;
    }
}

/// Lays out tiles of side `tile_px` over a `height x width` image with the
/// given fractional overlap. With a seed, interior offsets are jittered.
pub fn make_tile_grid(
    height: usize,
    width: usize,
    tile_px: usize,
    overlap: f64,
    jitter_seed: Option<u64>,
) -> Result<TileGrid> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap {overlap} not in [0, 1)")));
    }
    if tile_px == 0 || tile_px > height.min(width) {
        return Err(Error::invalid(format!(
            "tile size {tile_px} does not fit a {height}x{width} image"
        )));
    }
    let stride = stride_for(tile_px, overlap);
    let mut rows = nominal_positions(height, tile_px, stride);
    let mut cols = nominal_positions(width, tile_px, stride);
    if let Some(seed) = jitter_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = jitter_bound(tile_px, stride);
        jitter(&mut rows, height, tile_px, bound, &mut rng);
        jitter(&mut cols, width, tile_px, bound, &mut rng);
    }
    Ok(TileGrid { height, width, tile_px, overlap, jitter_seed, rows, cols })
}

impl TileGrid {
    /// A grid with one tile covering a square image.
    pub fn single(side: usize) -> TileGrid {
        TileGrid {
            height: side,
            width: side,
            tile_px: side,
            overlap: 0.0,
            jitter_seed: None,
            rows: vec![0],
            cols: vec![0],
        }
    }

    pub fn stride(&self) -> usize {
        stride_for(self.tile_px, self.overlap)
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tiles in canonical row-major order of nominal position.
    pub fn rects(&self) -> Vec<PixelRect> {
        self.rows
            .iter()
            .flat_map(|&y| self.cols.iter().map(move |&x| PixelRect::square(x, y, self.tile_px)))
            .collect()
    }

    pub fn windows(&self) -> Vec<Window> {
        self.rects()
            .into_iter()
            .map(|r| Window::from_pixel_rect(r, self.height, self.width).expect("tiles lie inside the image"))
            .collect()
    }

    /// Number of tiles covering each pixel, row-major.
    pub fn coverage_counts(&self) -> Vec<u32> {
        let count_axis = |pos: &[usize], len: usize| {
            let mut c = vec![0u32; len];
            for &p in pos {
                c[p..p + self.tile_px].iter_mut().for_each(|v| *v += 1);
            }
            c
        };
        let ry = count_axis(&self.rows, self.height);
        let cx = count_axis(&self.cols, self.width);
        ry.iter().flat_map(|&a| cx.iter().map(move |&b| a * b)).collect()
    }

    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::shape(
                format!("{}x{} image", self.height, self.width),
                format!("{height}x{width}"),
            ));
        }
        if self.rects().iter().any(|r| !r.fits_in(height, width)) {
            return Err(Error::invalid("tile grid leaves the image"));
        }
        Ok(())
    }
}
