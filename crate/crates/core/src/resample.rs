//! Sampling an image window onto a `D x D` tile and reconstructing a tile
//! back onto the pixel grid.
//!
//! Pixel centers sit at `(i + 0.5) / N` in normalized coordinates. Both
//! directions use bilinear interpolation; at the grid border the nearest two
//! samples are extrapolated linearly instead of clamped, so affine signals
//! survive a round trip exactly. Windows that coincide with a native pixel
//! block of the requested size are copied without interpolation.

use crate::error::{Error, Result};
use crate::image::{Image, Tile, MIN_TILE_SIZE};
use crate::window::{PixelRect, Window};

const EPS: f64 = 1e-9;

/// Left neighbour index and fractional offset for continuous pixel
/// coordinate `p` on an axis of `n` samples. The offset leaves `[0, 1]`
/// when `p` is outside the outermost pixel centers.
#[inline]
fn neighbours(p: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i0 = (p.floor().max(0.0) as usize).min(n - 2);
    (i0, p - i0 as f64)
}

struct AxisTaps {
    index: Vec<usize>,
    frac: Vec<f64>,
    /// 0 on single-sample axes, 1 otherwise.
    step: usize,
}

impl AxisTaps {
    fn new(coords: impl Iterator<Item = f64>, n: usize) -> Self {
        let (index, frac) = coords.map(|p| neighbours(p, n)).unzip();
        AxisTaps {
            index,
            frac,
            step: usize::from(n > 1),
        }
    }
}

/// Bilinear evaluation of every plane of `src` at the separable grid
/// described by `rows` x `cols`.
fn bilinear_grid(src: &Image, rows: &AxisTaps, cols: &AxisTaps) -> Vec<f32> {
    let (h, w) = (rows.index.len(), cols.index.len());
    let sw = src.width();
    let mut out = Vec::with_capacity(h * w * src.channels());
    for c in 0..src.channels() {
        let plane = src.plane(c);
        for r in 0..h {
            let (y0, ty) = (rows.index[r], rows.frac[r]);
            let row0 = &plane[y0 * sw..];
            let row1 = &plane[(y0 + rows.step) * sw..];
            for k in 0..w {
                let (x0, tx) = (cols.index[k], cols.frac[k]);
                let x1 = x0 + cols.step;
                let top = (1.0 - tx) * row0[x0] as f64 + tx * row0[x1] as f64;
                let bottom = (1.0 - tx) * row1[x0] as f64 + tx * row1[x1] as f64;
                out.push(((1.0 - ty) * top + ty * bottom) as f32);
            }
        }
    }
    out
}

/// Samples the part of `img` under `win` onto a `d x d` tile.
pub fn sample(img: &Image, win: &Window, d: usize) -> Result<Tile> {
    win.validate()?;
    if d < MIN_TILE_SIZE {
        return Err(Error::invalid(format!(
            "tile size {d} is below the minimum of {MIN_TILE_SIZE}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    if let Some(rect) = win.native_rect(h, w) {
        if rect.width == d && rect.height == d {
            return Tile::new(img.crop(rect)?, *win);
        }
    }
    let rows = AxisTaps::new(
        (0..d).map(|i| (win.y0 + (i as f64 + 0.5) / d as f64 * win.h) * h as f64 - 0.5),
        h,
    );
    let cols = AxisTaps::new(
        (0..d).map(|j| (win.x0 + (j as f64 + 0.5) / d as f64 * win.w) * w as f64 - 0.5),
        w,
    );
    let data = bilinear_grid(img, &rows, &cols);
    Tile::new(Image::new(d, d, img.channels(), img.color_space(), data)?, *win)
}

/// A reconstructed tile: pixel values on the support rectangle of a
/// `full_height x full_width` target grid. Pixels outside `support` are not
/// covered by the tile's window.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub support: PixelRect,
    pub image: Image,
    pub full_height: usize,
    pub full_width: usize,
}

impl Fragment {
    /// Per-pixel support indicator over the full target grid, row-major.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.full_height * self.full_width];
        for y in self.support.y..self.support.y + self.support.height {
            let row = y * self.full_width;
            m[row + self.support.x..row + self.support.x + self.support.width].fill(true);
        }
        m
    }

    /// The fragment pasted onto a zero image of the full target size.
    pub fn to_full_image(&self) -> Image {
        let s = self.support;
        Image::from_fn(
            self.full_height,
            self.full_width,
            self.image.channels(),
            self.image.color_space(),
            |y, x, c| {
                if s.contains(y, x) {
                    self.image.get(y - s.y, x - s.x, c)
                } else {
                    0.0
                }
            },
        )
        .expect("valid target size")
    }
}

/// Pixels of an `n`-sample axis whose centers lie in `[start, start + len]`.
fn support_range(start: f64, len: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (start * n as f64 - 0.5 - EPS).ceil().max(0.0) as usize;
    let hi_f = ((start + len) * n as f64 - 0.5 + EPS).floor();
    if hi_f < 0.0 {
        return None;
    }
    let hi = (hi_f as usize).min(n - 1);
    (hi >= lo).then_some((lo, hi - lo + 1))
}

/// Maps a tile back through its window onto a `height x width` pixel grid.
pub fn reconstruct(tile: &Tile, height: usize, width: usize) -> Result<Fragment> {
    let win = tile.window();
    win.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::invalid("empty reconstruction target"));
    }
    let d = tile.size();
    if let Some(rect) = win.native_rect(height, width) {
        if rect.width == d && rect.height == d {
            return Ok(Fragment {
                support: rect,
                image: tile.image().clone(),
                full_height: height,
                full_width: width,
            });
        }
    }
    let (y, sh) = support_range(win.y0, win.h, height)
        .ok_or_else(|| Error::invalid("window covers no pixel centers"))?;
    let (x, sw) = support_range(win.x0, win.w, width)
        .ok_or_else(|| Error::invalid("window covers no pixel centers"))?;
    let rows = AxisTaps::new(
        (y..y + sh).map(|r| ((r as f64 + 0.5) / height as f64 - win.y0) / win.h * d as f64 - 0.5),
        d,
    );
    let cols = AxisTaps::new(
        (x..x + sw).map(|k| ((k as f64 + 0.5) / width as f64 - win.x0) / win.w * d as f64 - 0.5),
        d,
    );
    let data = bilinear_grid(tile.image(), &rows, &cols);
    let image = Image::new(sh, sw, tile.channels(), tile.image().color_space(), data)?;
    Ok(Fragment {
        support: PixelRect::new(x, y, sw, sh),
        image,
        full_height: height,
        full_width: width,
    })
}
