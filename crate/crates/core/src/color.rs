//! sRGB, linear RGB and CIELAB (D65) conversions.
//!
//! Scalar math runs in f64; images store the results as f32. The D65 white
//! used for CIELAB is the image of RGB white under the sRGB matrix, so sRGB
//! white lands on L = 100, a = b = 0.

use crate::error::{Error, Result};
use crate::image::{clamp_unit, ColorSpace, Image};

/// Linear RGB (sRGB primaries) to CIE XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = invert3(RGB_TO_XYZ);

const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

const fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv = 1.0 / det;
    [
        [c00 * inv, (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv, (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv],
        [c01 * inv, (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv, (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv],
        [c02 * inv, (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv, (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv],
    ]
}

#[inline]
fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// sRGB EOTF: encoded value to linear light.
#[inline]
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse sRGB EOTF.
#[inline]
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

pub fn linear_rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mul3(&RGB_TO_XYZ, rgb);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIELAB to linear RGB. The result is not clamped and may leave `[0, 1]`
/// for out-of-gamut colors.
pub fn lab_to_linear_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE[0],
        lab_f_inv(fy) * WHITE[1],
        lab_f_inv(fz) * WHITE[2],
    ];
    mul3(&XYZ_TO_RGB, xyz)
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    linear_rgb_to_lab(rgb.map(srgb_to_linear))
}

/// CIELAB to sRGB, clamped to `[0, 1]`.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    lab_to_linear_rgb(lab).map(|v| linear_to_srgb(v.clamp(0.0, 1.0)))
}

/// Relative luminance of linear RGB (Rec. 709 / sRGB primaries).
#[inline]
pub fn linear_luminance(rgb: [f64; 3]) -> f64 {
    RGB_TO_XYZ[1][0] * rgb[0] + RGB_TO_XYZ[1][1] * rgb[1] + RGB_TO_XYZ[1][2] * rgb[2]
}

fn require_rgb(img: &Image, space: ColorSpace) -> Result<()> {
    img.ensure_color_space(space)?;
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "expected a 3-channel image, got {} channels",
            img.channels()
        )));
    }
    Ok(())
}

fn map_pixels(img: &Image, out_space: ColorSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> Image {
    let n = img.pixel_count();
    let src = img.data();
    let mut out = vec![0f32; n * 3];
    for i in 0..n {
        let px = [src[i] as f64, src[n + i] as f64, src[2 * n + i] as f64];
        let r = f(px);
        out[i] = r[0] as f32;
        out[n + i] = r[1] as f32;
        out[2 * n + i] = r[2] as f32;
    }
    Image::new(img.height(), img.width(), 3, out_space, out).expect("same shape")
}

/// Converts an sRGB image to CIELAB (D65).
pub fn rgb_to_lab(img: &Image) -> Result<Image> {
    require_rgb(img, ColorSpace::Srgb)?;
    Ok(map_pixels(img, ColorSpace::Lab, srgb_to_lab))
}

/// Converts a CIELAB image to sRGB; out-of-gamut colors are clamped.
pub fn lab_to_rgb(img: &Image) -> Result<Image> {
    require_rgb(img, ColorSpace::Lab)?;
    Ok(map_pixels(img, ColorSpace::Srgb, lab_to_srgb))
}

pub fn linear_to_lab(img: &Image) -> Result<Image> {
    require_rgb(img, ColorSpace::LinearRgb)?;
    Ok(map_pixels(img, ColorSpace::Lab, linear_rgb_to_lab))
}

/// CIELAB to linear RGB, clamped to `[0, 1]`.
pub fn lab_to_linear(img: &Image) -> Result<Image> {
    require_rgb(img, ColorSpace::Lab)?;
    Ok(map_pixels(img, ColorSpace::LinearRgb, lab_to_linear_rgb))
}

/// Applies the sRGB EOTF sample-wise. Works for 1- and 3-channel images.
pub fn srgb_to_linear_image(img: &Image) -> Result<Image> {
    img.ensure_color_space(ColorSpace::Srgb)?;
    img.map(|v| srgb_to_linear(v as f64) as f32)
        .relabel(ColorSpace::LinearRgb)
}

pub fn linear_to_srgb_image(img: &Image) -> Result<Image> {
    img.ensure_color_space(ColorSpace::LinearRgb)?;
    img.map(|v| linear_to_srgb(clamp_unit(v) as f64) as f32)
        .relabel(ColorSpace::Srgb)
}

/// ITU-R BT.601 luma of the stored (gamma-encoded) samples. Single-channel
/// images are returned as-is.
pub fn luma_bt601(img: &Image) -> Vec<f64> {
    if img.channels() == 1 {
        return img.data().iter().map(|&v| v as f64).collect();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect()
}

/// Mean relative luminance of an sRGB image in linear light.
pub fn mean_linear_luminance(img: &Image) -> Result<f64> {
    img.ensure_color_space(ColorSpace::Srgb)?;
    let n = img.pixel_count();
    let total: f64 = if img.channels() == 1 {
        img.data().iter().map(|&v| srgb_to_linear(v as f64)).sum()
    } else {
        (0..n)
            .map(|i| {
                linear_luminance([
                    srgb_to_linear(img.plane(0)[i] as f64),
                    srgb_to_linear(img.plane(1)[i] as f64),
                    srgb_to_linear(img.plane(2)[i] as f64),
                ])
            })
            .sum()
    };
    Ok(total / n as f64)
}

/// Replicates a single-channel image into three channels; 3-channel images
/// are cloned.
pub fn to_rgb(img: &Image) -> Image {
    if img.channels() == 3 {
        return img.clone();
    }
    let mut data = Vec::with_capacity(img.pixel_count() * 3);
    for _ in 0..3 {
        data.extend_from_slice(img.data());
    }
    Image::new(img.height(), img.width(), 3, img.color_space(), data).expect("same shape")
}
