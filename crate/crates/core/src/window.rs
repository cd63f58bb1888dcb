//! Windows on the unit square and their pixel-grid counterparts.
//!
//! A [`Window`] stands for one group element: the affine map taking the
//! window onto the unit square. Admissible windows never leave the viewport.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;
/// Tolerance used when deciding whether a normalized coordinate lands on a
/// pixel boundary.
const GRID_EPS: f64 = 1e-6;

/// Axis-aligned pixel rectangle, top-left at (`x`, `y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        PixelRect { x, y, width, height }
    }

    pub fn square(x: usize, y: usize, side: usize) -> Self {
        PixelRect::new(x, y, side, side)
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.width).min(other.x + other.width);
        let y1 = (self.y + self.height).min(other.y + other.height);
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.x + self.width <= width && self.y + self.height <= height
    }
}

/// Sub-rectangle of the unit square in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl Window {
    pub fn new(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        let win = Window { x0, y0, w, h };
        win.validate()?;
        Ok(win)
    }

    /// The whole viewport.
    pub fn full() -> Self {
        Window {
            x0: 0.0,
            y0: 0.0,
            w: 1.0,
            h: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.y0, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("degenerate window {self:?}")));
        }
        if self.x0 < -EPS || self.y0 < -EPS || self.x0 + self.w > 1.0 + EPS || self.y0 + self.h > 1.0 + EPS {
            return Err(Error::invalid(format!("window {self:?} leaves the unit square")));
        }
        Ok(())
    }

    pub fn from_pixel_rect(rect: PixelRect, height: usize, width: usize) -> Result<Self> {
        if !rect.fits_in(height, width) {
            return Err(Error::invalid(format!(
                "rectangle {rect:?} exceeds image {height}x{width}"
            )));
        }
        Window::new(
            rect.x as f64 / width as f64,
            rect.y as f64 / height as f64,
            rect.width as f64 / width as f64,
            rect.height as f64 / height as f64,
        )
    }

    /// The pixel rectangle this window covers exactly on a `height x width`
    /// grid, or `None` if its edges fall between pixel boundaries.
    pub fn native_rect(&self, height: usize, width: usize) -> Option<PixelRect> {
        fn snap(v: f64) -> Option<usize> {
            let r = v.round();
            ((v - r).abs() < GRID_EPS && r >= 0.0).then_some(r as usize)
        }
        let x = snap(self.x0 * width as f64)?;
        let y = snap(self.y0 * height as f64)?;
        let w = snap(self.w * width as f64)?;
        let h = snap(self.h * height as f64)?;
        let rect = PixelRect::new(x, y, w, h);
        (w > 0 && h > 0 && rect.fits_in(height, width)).then_some(rect)
    }

    /// Whether the normalized point (`u`, `v`) lies inside the window.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x0 - EPS && u <= self.x0 + self.w + EPS && v >= self.y0 - EPS && v <= self.y0 + self.h + EPS
    }

    /// Horizontal mirror image of the window.
    pub fn mirrored(&self) -> Window {
        Window {
            x0: (1.0 - self.x0 - self.w).max(0.0),
            ..*self
        }
    }
}
