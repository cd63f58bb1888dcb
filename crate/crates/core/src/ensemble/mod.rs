//! Weighted averaging of overlapping tile estimates.
//!
//! Every tile is one group element (an axis-aligned translation at native
//! resolution). The ensemble estimate at a pixel is the weighted mean of the
//! estimates from all tiles whose window contains it:
//!
//! ```text
//! out(p) = sum_g w_g(p) * est_g(p) / sum_g w_g(p)
//! ```
//!
//! Execution has two phases: tiles are enhanced in parallel on the current
//! rayon pool, then accumulated sequentially in canonical tile order, so the
//! floating-point result is identical for any number of workers.

mod grid;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{make_tile_grid, stride_for, TileGrid, DEFAULT_OVERLAP, DEFAULT_TILE_PX};

use crate::color::{lab_to_rgb, rgb_to_lab};
use crate::enhancer::{validate_gain, Enhancer, LONG_SCALE_INVOCATION};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image, Tile};
use crate::resample::{reconstruct, sample, Fragment};
use crate::window::{PixelRect, Window};

/// Tiles enhanced concurrently before their results are folded in.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    #[default]
    Uniform,
    /// Separable raised cosine, 1 at the tile center, falling to
    /// [`TAPER_FLOOR`] at the border.
    Taper,
}

pub const TAPER_FLOOR: f64 = 1e-3;

impl WeightFn {
    /// Per-pixel weights over a `d x d` tile, row-major.
    pub fn weights(self, d: usize) -> Vec<f64> {
        match self {
            WeightFn::Uniform => vec![1.0; d * d],
            WeightFn::Taper => {
                let axis: Vec<f64> = (0..d)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / d as f64;
                        0.5 * (1.0 - (std::f64::consts::TAU * t).cos())
                    })
                    .collect();
                axis.iter()
                    .flat_map(|&wy| axis.iter().map(move |&wx| TAPER_FLOOR + (1.0 - TAPER_FLOOR) * wy * wx))
                    .collect()
            }
        }
    }
}

/// Running weighted sums for the ensemble average.
#[derive(Debug, Clone)]
pub struct Accumulator {
    height: usize,
    width: usize,
    channels: usize,
    weighted_sum: Vec<f64>,
    weight_sum: Vec<f64>,
    count: Vec<u32>,
}

impl Accumulator {
    pub fn new(height: usize, width: usize, channels: usize) -> Accumulator {
        let n = height * width;
        Accumulator {
            height,
            width,
            channels,
            weighted_sum: vec![0.0; n * channels],
            weight_sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Adds a reconstructed tile. `weights` are indexed over the fragment's
    /// support, row-major.
    pub fn add(&mut self, fragment: &Fragment, weights: &[f64]) -> Result<()> {
        let s = fragment.support;
        if fragment.full_height != self.height
            || fragment.full_width != self.width
            || fragment.image.channels() != self.channels
        {
            return Err(Error::shape(
                format!("{}x{}x{}", self.height, self.width, self.channels),
                format!("{}x{}x{}", fragment.full_height, fragment.full_width, fragment.image.channels()),
            ));
        }
        if weights.len() != s.width * s.height {
            return Err(Error::shape(format!("{} weights", s.width * s.height), weights.len()));
        }
        let n = self.height * self.width;
        for y in 0..s.height {
            let dst_row = (s.y + y) * self.width + s.x;
            let wrow = &weights[y * s.width..(y + 1) * s.width];
            for (k, &w) in wrow.iter().enumerate() {
                self.weight_sum[dst_row + k] += w;
                self.count[dst_row + k] += 1;
            }
            for c in 0..self.channels {
                let src = &fragment.image.plane(c)[y * s.width..(y + 1) * s.width];
                let dst = &mut self.weighted_sum[c * n + dst_row..c * n + dst_row + s.width];
                for ((d, &v), &w) in dst.iter_mut().zip(src).zip(wrow) {
                    *d += w * v as f64;
                }
            }
        }
        Ok(())
    }

    /// Weighted mean image and per-pixel tile counts. Fails if any pixel
    /// received no weight.
    pub fn finish(self, color_space: ColorSpace) -> Result<(Image, Vec<u32>)> {
        let n = self.height * self.width;
        if let Some(i) = self.weight_sum.iter().position(|&w| w <= 0.0) {
            return Err(Error::invalid(format!(
                "pixel ({}, {}) is not covered by any tile",
                i / self.width,
                i % self.width
            )));
        }
        let data = self
            .weighted_sum
            .iter()
            .enumerate()
            .map(|(k, &s)| (s / self.weight_sum[k % n]) as f32)
            .collect();
        let img = Image::new(self.height, self.width, self.channels, color_space, data)?;
        Ok((img, self.count))
    }
}

#[derive(Debug, Clone)]
pub struct AveragedEstimate {
    pub image: Image,
    /// Tiles covering each pixel, row-major.
    pub coverage: Vec<u32>,
}

fn require_srgb3(img: &Image) -> Result<()> {
    img.ensure_color_space(ColorSpace::Srgb)?;
    if img.channels() != 3 {
        return Err(Error::invalid("enhancement needs a 3-channel image"));
    }
    Ok(())
}

/// Samples `win` to a `d x d` tile, enhances it in LAB and reconstructs the
/// sRGB result on the image grid.
fn enhance_window(
    img: &Image,
    enhancer: &dyn Enhancer,
    win: &Window,
    d: usize,
    gain: f32,
    invocation: u64,
) -> Result<Fragment> {
    let tile = sample(img, win, d)?;
    let lab = tile.with_image(rgb_to_lab(tile.image())?)?;
    let out = enhancer.enhance(&lab, gain, invocation)?;
    if out.size() != d || out.channels() != 3 {
        return Err(Error::shape(format!("{d}x{d}x3"), out.image().shape_string()));
    }
    let rgb = Tile::new(lab_to_rgb(out.image())?, tile.window())?;
    reconstruct(&rgb, img.height(), img.width())
}

/// Short-scale ensemble: enhance every tile of `grid` at native resolution
/// and average the overlapping estimates with weights `wf`.
pub fn averaged_estimate(
    img: &Image,
    enhancer: &dyn Enhancer,
    grid: &TileGrid,
    wf: WeightFn,
    gain: f32,
) -> Result<AveragedEstimate> {
    require_srgb3(img)?;
    validate_gain(gain)?;
    grid.validate_for(img.height(), img.width())?;
    let windows = grid.windows();
    let weights = wf.weights(grid.tile_px);
    let mut acc = Accumulator::new(img.height(), img.width(), 3);
    for (b, batch) in windows.chunks(BATCH).enumerate() {
        let fragments: Vec<Fragment> = batch
            .par_iter()
            .enumerate()
            .map(|(k, win)| enhance_window(img, enhancer, win, grid.tile_px, gain, (b * BATCH + k) as u64))
            .collect::<Result<_>>()?;
        for frag in &fragments {
            acc.add(frag, &weights)?;
        }
    }
    let (image, coverage) = acc.finish(ColorSpace::Srgb)?;
    Ok(AveragedEstimate { image, coverage })
}

/// Long-scale estimate: the whole image resampled to `d x d`, enhanced once,
/// and resampled back to native size.
pub fn long_scale_estimate(img: &Image, enhancer: &dyn Enhancer, d: usize, gain: f32) -> Result<Image> {
    require_srgb3(img)?;
    validate_gain(gain)?;
    let frag = enhance_window(img, enhancer, &Window::full(), d, gain, LONG_SCALE_INVOCATION)?;
    debug_assert_eq!(frag.support, PixelRect::new(0, 0, img.width(), img.height()));
    Ok(frag.image)
}

/// Channel-averaged absolute difference of two images over `rect`.
#[derive(Debug, Clone)]
pub struct Disagreement {
    pub region: PixelRect,
    /// Single-channel map over `region`.
    pub heatmap: Image,
    pub mean: f64,
}

pub fn region_disagreement(a: &Image, b: &Image, rect: PixelRect) -> Result<Disagreement> {
    a.ensure_same_shape(b)?;
    if !rect.fits_in(a.height(), a.width()) || rect.width == 0 || rect.height == 0 {
        return Err(Error::invalid(format!("region {rect:?} is empty or outside the image")));
    }
    let c = a.channels();
    let mut heat = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        for x in rect.x..rect.x + rect.width {
            let s: f64 = (0..c).map(|k| (a.get(y, x, k) as f64 - b.get(y, x, k) as f64).abs()).sum();
            heat.push(s / c as f64);
        }
    }
    let mean = heat.iter().sum::<f64>() / heat.len() as f64;
    let heatmap = Image::new(rect.height, rect.width, 1, ColorSpace::Srgb, heat.into_iter().map(|v| v as f32).collect())?;
    Ok(Disagreement { region: rect, heatmap, mean })
}

/// Enhances two overlapping native-resolution crops independently and
/// measures how much their estimates differ where they overlap.
pub fn crop_disagreement(
    img: &Image,
    enhancer: &dyn Enhancer,
    win_a: &Window,
    win_b: &Window,
    gain: f32,
) -> Result<Disagreement> {
    require_srgb3(img)?;
    validate_gain(gain)?;
    let (h, w) = (img.height(), img.width());
    let native = |win: &Window| -> Result<PixelRect> {
        win.native_rect(h, w)
            .filter(|r| r.width == r.height)
            .ok_or_else(|| Error::invalid(format!("window {win:?} is not a square native pixel block")))
    };
    let (ra, rb) = (native(win_a)?, native(win_b)?);
    let overlap = ra.intersect(&rb).ok_or_else(|| Error::invalid("windows do not overlap"))?;
    let fa = enhance_window(img, enhancer, win_a, ra.width, gain, 0)?.to_full_image();
    let fb = enhance_window(img, enhancer, win_b, rb.width, gain, 0)?.to_full_image();
    region_disagreement(&fa, &fb, overlap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhancer::EnhancerSpec;
    use crate::pattern::Scene;

    fn max_abs(a: &Image, b: &Image) -> f32 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0f32, f32::max)
    }

    #[test]
    fn taper_weights_positive_and_peaked() {
        let w = WeightFn::Taper.weights(64);
        assert!(w.iter().all(|&v| v >= TAPER_FLOOR));
        let max = w.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 2e-3);
        assert!(w[0] < 2e-3);
        assert!(WeightFn::Uniform.weights(8).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_estimates_average_to_constant() {
        let mut acc = Accumulator::new(10, 12, 1);
        let weights = WeightFn::Taper.weights(6);
        for (x, y) in [(0, 0), (6, 0), (3, 2), (0, 4), (6, 4)] {
            let frag = Fragment {
                support: PixelRect::square(x, y, 6),
                image: Image::filled(6, 6, ColorSpace::Srgb, &[0.37]).unwrap(),
                full_height: 10,
                full_width: 12,
            };
            acc.add(&frag, &weights).unwrap();
        }
        let (img, count) = acc.finish(ColorSpace::Srgb).unwrap();
        assert!(img.data().iter().all(|&v| (v - 0.37).abs() < 1e-7));
        assert_eq!(count[3 * 12 + 4], 2);
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let acc = Accumulator::new(4, 4, 1);
        assert!(acc.finish(ColorSpace::Srgb).is_err());
    }

    #[test]
    fn identity_closure_small() {
        let img = Scene::new(4).render(96, 128);
        let grid = make_tile_grid(96, 128, 32, 0.8, Some(1)).unwrap();
        let id = EnhancerSpec::Identity.build().unwrap();
        for wf in [WeightFn::Uniform, WeightFn::Taper] {
            let out = averaged_estimate(&img, id.as_ref(), &grid, wf, 1.0).unwrap();
            assert!(max_abs(&out.image, &img) <= 1e-5);
            assert!(out.coverage.iter().all(|&c| c >= 1));
        }
    }

    #[test]
    fn single_window_equals_one_enhancement() {
        let img = Scene::new(5).render(64, 64);
        let e = EnhancerSpec::gain_gamma().build().unwrap();
        let out = averaged_estimate(&img, e.as_ref(), &TileGrid::single(64), WeightFn::Taper, 3.0).unwrap();
        let lab = Tile::new(rgb_to_lab(&img).unwrap(), Window::full()).unwrap();
        let direct = lab_to_rgb(e.enhance(&lab, 3.0, 0).unwrap().image()).unwrap();
        assert!(max_abs(&out.image, &direct) <= 1e-6);
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let img = Scene::new(6).render(80, 100);
        let grid = make_tile_grid(80, 100, 32, 0.8, Some(9)).unwrap();
        let e = EnhancerSpec::noisy(EnhancerSpec::gain_gamma(), 0.02, 5).build().unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| averaged_estimate(&img, e.as_ref(), &grid, WeightFn::Taper, 2.0).unwrap().image)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn long_scale_identity_on_ramp_and_native_square() {
        let ramp = Image::from_fn(120, 200, 3, ColorSpace::Srgb, |y, x, c| {
            0.2 + 0.5 * x as f32 / 200.0 + 0.2 * y as f32 / 120.0 + 0.02 * c as f32
        })
        .unwrap();
        let id = EnhancerSpec::Identity.build().unwrap();
        let out = long_scale_estimate(&ramp, id.as_ref(), 64, 1.0).unwrap();
        assert!(max_abs(&out, &ramp) <= 1e-6, "{}", max_abs(&out, &ramp));

        let sq = Scene::new(2).render(64, 64);
        let out = long_scale_estimate(&sq, id.as_ref(), 64, 1.0).unwrap();
        assert!(max_abs(&out, &sq) <= 1e-5);
    }

    #[test]
    fn disagreement_zero_cases() {
        let img = Scene::new(7).render(64, 96);
        let a = Window::from_pixel_rect(PixelRect::square(0, 0, 64), 64, 96).unwrap();
        let b = Window::from_pixel_rect(PixelRect::square(32, 0, 64), 64, 96).unwrap();
        let id = EnhancerSpec::Identity.build().unwrap();
        let d = crop_disagreement(&img, id.as_ref(), &a, &b, 1.0).unwrap();
        assert_eq!(d.region, PixelRect::new(32, 0, 32, 64));
        assert_eq!(d.mean, 0.0);
        let gg = EnhancerSpec::gain_gamma().build().unwrap();
        assert_eq!(crop_disagreement(&img, gg.as_ref(), &a, &a, 4.0).unwrap().mean, 0.0);
    }

    #[test]
    fn gain_gamma_crops_disagree() {
        let img = Scene::new(8).render(128, 192);
        let a = Window::from_pixel_rect(PixelRect::square(0, 0, 128), 128, 192).unwrap();
        let b = Window::from_pixel_rect(PixelRect::square(64, 0, 128), 128, 192).unwrap();
        let gg = EnhancerSpec::gain_gamma().build().unwrap();
        let d = crop_disagreement(&img, gg.as_ref(), &a, &b, 4.0).unwrap();
        assert!(d.mean > 0.0);
    }

    #[test]
    fn disjoint_windows_rejected() {
        let img = Scene::new(7).render(64, 128);
        let a = Window::from_pixel_rect(PixelRect::square(0, 0, 64), 64, 128).unwrap();
        let b = Window::from_pixel_rect(PixelRect::square(64, 0, 64), 64, 128).unwrap();
        let id = EnhancerSpec::Identity.build().unwrap();
        assert!(crop_disagreement(&img, id.as_ref(), &a, &b, 1.0).is_err());
    }
}
