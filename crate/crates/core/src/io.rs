//! Image files: 8/16-bit PNG and the lossless `.rawf32` container.
//!
//! `.rawf32` layout, all little-endian: magic `RAWF`, `u32` height, `u32`
//! width, `u32` channels, then `height * width * channels` f32 samples in
//! channel-planar order. The container carries no color space; readers
//! assume sRGB.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

pub const RAWF32_MAGIC: &[u8; 4] = b"RAWF";
pub const RAWF32_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PngDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Supported on-disk formats, chosen by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    RawF32,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Option<FileFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(FileFormat::Png),
            "rawf32" => Some(FileFormat::RawF32),
            _ => None,
        }
    }
}

/// Reads a PNG or `.rawf32` file as an sRGB image. PNG alpha is dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    match FileFormat::from_path(path) {
        Some(FileFormat::Png) => read_png(path),
        Some(FileFormat::RawF32) => read_rawf32(path),
        None => Err(Error::invalid(format!(
            "{}: unsupported image extension (expected .png or .rawf32)",
            path.display()
        ))),
    }
}

/// Writes an image as PNG (8-bit) or `.rawf32`, by extension.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_image_with_depth(path, img, PngDepth::Eight)
}

pub fn write_image_with_depth(path: impl AsRef<Path>, img: &Image, depth: PngDepth) -> Result<()> {
    let path = path.as_ref();
    match FileFormat::from_path(path) {
        Some(FileFormat::Png) => write_png(path, img, depth),
        Some(FileFormat::RawF32) => write_rawf32(path, img),
        None => Err(Error::invalid(format!(
            "{}: unsupported image extension (expected .png or .rawf32)",
            path.display()
        ))),
    }
}

pub fn read_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let gray = matches!(
        dynimg,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let sixteen = matches!(
        dynimg,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let channels = if gray { 1 } else { 3 };
    let interleaved: Vec<f32> = match (gray, sixteen) {
        (true, false) => dynimg.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        (true, true) => dynimg.to_luma16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        (false, false) => dynimg.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        (false, true) => dynimg.to_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
    };
    let n = w * h;
    let mut planar = vec![0f32; n * channels];
    for (i, px) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            planar[c * n + i] = v;
        }
    }
    Image::new(h, w, channels, ColorSpace::Srgb, planar)
}

fn interleave<T>(img: &Image, quant: impl Fn(f32) -> T) -> Vec<T> {
    let n = img.pixel_count();
    let c = img.channels();
    let data = img.data();
    (0..n * c).map(|k| quant(data[(k % c) * n + k / c])).collect()
}

pub fn write_png(path: &Path, img: &Image, depth: PngDepth) -> Result<()> {
    if !img.color_space().is_unit_range() {
        return Err(Error::invalid("only sRGB or linear images can be written as PNG"));
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let result = match (img.channels(), depth) {
        (1, PngDepth::Eight) => {
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, interleave(img, to_u8)).map(DynamicImage::from)
        }
        (1, PngDepth::Sixteen) => {
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, interleave(img, to_u16)).map(DynamicImage::from)
        }
        (_, PngDepth::Eight) => {
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, interleave(img, to_u8)).map(DynamicImage::from)
        }
        (_, PngDepth::Sixteen) => {
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, interleave(img, to_u16)).map(DynamicImage::from)
        }
    };
    let buf = result.expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// `v * 255` rounded half away from zero.
#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
fn to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn encode_rawf32(img: &Image) -> Vec<u8> {
    let mut buf = Vec::with_capacity(RAWF32_HEADER_LEN + img.data().len() * 4);
    buf.extend_from_slice(RAWF32_MAGIC);
    buf.extend_from_slice(&(img.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.channels() as u32).to_le_bytes());
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_rawf32(bytes: &[u8], color_space: ColorSpace) -> std::result::Result<Image, String> {
    if bytes.len() < RAWF32_HEADER_LEN {
        return Err("file shorter than the 16-byte header".into());
    }
    if &bytes[..4] != RAWF32_MAGIC {
        return Err("bad magic (expected RAWF)".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (word(4), word(8), word(12));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or("header dimensions overflow")?;
    let payload = &bytes[RAWF32_HEADER_LEN..];
    if payload.len() != expected {
        return Err(format!("payload has {} bytes, header implies {expected}", payload.len()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::new(h, w, c, color_space, data).map_err(|e| e.to_string())
}

pub fn write_rawf32(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_rawf32(img)).map_err(|e| Error::io(path, e))
}

pub fn read_rawf32(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rawf32(&bytes, ColorSpace::Srgb).map_err(|message| Error::Decode {
        path: path.to_path_buf(),
        message,
    })
}

/// Image files (`.png`, `.rawf32`) directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && FileFormat::from_path(&path).is_some() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
