//! Planar floating-point rasters.
//!
//! Samples are stored channel-planar: the value of channel `c` at row `y`,
//! column `x` lives at `data[c * height * width + y * width + x]`. This is the
//! same layout the external-process wire protocol uses, so tiles can be sent
//! without reshuffling.
//!
//! sRGB and linear-RGB images always hold samples in `[0, 1]`; every
//! constructor clamps (NaN becomes 0). CIELAB images are left unclamped, with
//! nominal ranges L in `[0, 100]` and a, b in `[-128, 127]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::{PixelRect, Window};

/// Smallest tile side an enhancer accepts.
pub const MIN_TILE_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    Srgb,
    LinearRgb,
    Lab,
}

impl ColorSpace {
    /// Whether samples in this space are confined to `[0, 1]`.
    pub fn is_unit_range(self) -> bool {
        matches!(self, ColorSpace::Srgb | ColorSpace::LinearRgb)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    color_space: ColorSpace,
    data: Vec<f32>,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        color_space: ColorSpace,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if color_space == ColorSpace::Lab && channels != 3 {
            return Err(Error::invalid("LAB images need 3 channels"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} samples"),
                format!("{} samples", data.len()),
            ));
        }
        if color_space.is_unit_range() {
            data.iter_mut().for_each(|v| *v = clamp_unit(*v));
        }
        Ok(Image {
            height,
            width,
            channels,
            color_space,
            data,
        })
    }

    /// Image with every pixel equal to `pixel` (one value per channel).
    pub fn filled(height: usize, width: usize, color_space: ColorSpace, pixel: &[f32]) -> Result<Self> {
        let n = height * width;
        let mut data = Vec::with_capacity(n * pixel.len());
        for &v in pixel {
            data.extend(std::iter::repeat_n(v, n));
        }
        Image::new(height, width, pixel.len(), color_space, data)
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        color_space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Image::new(height, width, channels, color_space, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `"HxWxC"`, used in error messages.
    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape_string(), other.shape_string()))
        }
    }

    pub fn ensure_color_space(&self, expected: ColorSpace) -> Result<()> {
        if self.color_space == expected {
            Ok(())
        } else {
            Err(Error::ColorSpace {
                expected,
                found: self.color_space,
            })
        }
    }

    /// Reinterprets the samples as belonging to another color space without
    /// converting them. Values are clamped if the new space is unit-range.
    pub fn relabel(self, color_space: ColorSpace) -> Result<Image> {
        Image::new(self.height, self.width, self.channels, color_space, self.data)
    }

    /// Applies `f` to every sample, keeping shape and color space.
    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Image::new(self.height, self.width, self.channels, self.color_space, data)
            .expect("shape preserved by map")
    }

    /// Mean over all samples, accumulated in f64.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Bit-exact copy of a pixel rectangle.
    pub fn crop(&self, rect: PixelRect) -> Result<Image> {
        if rect.x + rect.width > self.width || rect.y + rect.height > self.height {
            return Err(Error::invalid(format!(
                "crop {rect:?} exceeds image {}x{}",
                self.height, self.width
            )));
        }
        if rect.width == 0 || rect.height == 0 {
            return Err(Error::invalid("empty crop"));
        }
        let mut data = Vec::with_capacity(rect.width * rect.height * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in rect.y..rect.y + rect.height {
                let row = y * self.width;
                data.extend_from_slice(&plane[row + rect.x..row + rect.x + rect.width]);
            }
        }
        Image::new(rect.height, rect.width, self.channels, self.color_space, data)
    }

    pub fn mirror_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, self.color_space, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
        .expect("shape preserved by mirror")
    }
}

/// A square `D x D` raster together with the window of the source image it
/// was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    image: Image,
    window: Window,
}

impl Tile {
    pub fn new(image: Image, window: Window) -> Result<Self> {
        if image.height() != image.width() {
            return Err(Error::shape(
                "square tile",
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        if image.height() < MIN_TILE_SIZE {
            return Err(Error::invalid(format!(
                "tile side {} is below the minimum of {MIN_TILE_SIZE}",
                image.height()
            )));
        }
        Ok(Tile { image, window })
    }

    pub fn size(&self) -> usize {
        self.image.height()
    }

    pub fn channels(&self) -> usize {
        self.image.channels()
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_image(self) -> Image {
        self.image
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Replaces the raster, keeping the source window. The new raster must
    /// have the same shape.
    pub fn with_image(&self, image: Image) -> Result<Tile> {
        self.image.ensure_same_shape(&image)?;
        Ok(Tile {
            image,
            window: self.window,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range_spaces_are_clamped() {
        let img = Image::new(1, 3, 1, ColorSpace::Srgb, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
        let img = Image::new(1, 1, 1, ColorSpace::LinearRgb, vec![f32::NAN]).unwrap();
        assert_eq!(img.data(), &[0.0]);
    }

    #[test]
    fn lab_is_not_clamped() {
        let img = Image::new(1, 1, 3, ColorSpace::Lab, vec![100.0, -20.0, 30.0]).unwrap();
        assert_eq!(img.data(), &[100.0, -20.0, 30.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::new(0, 2, 1, ColorSpace::Srgb, vec![]).is_err());
        assert!(Image::new(2, 2, 2, ColorSpace::Srgb, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 3, ColorSpace::Srgb, vec![0.0; 11]).is_err());
        assert!(Image::new(2, 2, 1, ColorSpace::Lab, vec![0.0; 4]).is_err());
    }

    #[test]
    fn planar_layout() {
        let img = Image::from_fn(2, 3, 3, ColorSpace::Lab, |y, x, c| (100 * c + 10 * y + x) as f32).unwrap();
        assert_eq!(img.get(1, 2, 2), 212.0);
        assert_eq!(img.data()[2 * 6 + 3 + 2], 212.0);
        assert_eq!(img.plane(1)[4], 111.0);
    }

    #[test]
    fn crop_is_exact() {
        let img = Image::from_fn(5, 6, 1, ColorSpace::Srgb, |y, x, _| (y * 6 + x) as f32 / 30.0).unwrap();
        let c = img.crop(PixelRect::new(2, 1, 3, 2)).unwrap();
        assert_eq!(c.height(), 2);
        assert_eq!(c.width(), 3);
        assert_eq!(c.get(0, 0, 0), img.get(1, 2, 0));
        assert_eq!(c.get(1, 2, 0), img.get(2, 4, 0));
        assert!(img.crop(PixelRect::new(4, 0, 3, 1)).is_err());
    }

    #[test]
    fn tile_requires_square_and_min_size() {
        let w = Window::full();
        let small = Image::filled(16, 16, ColorSpace::Srgb, &[0.5]).unwrap();
        assert!(Tile::new(small, w).is_err());
        let rect = Image::filled(32, 40, ColorSpace::Srgb, &[0.5]).unwrap();
        assert!(Tile::new(rect, w).is_err());
        let ok = Image::filled(32, 32, ColorSpace::Srgb, &[0.5]).unwrap();
        assert_eq!(Tile::new(ok, w).unwrap().size(), 32);
    }
}
