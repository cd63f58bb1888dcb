use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

/// Scales a linear image by `w` in `(0, 1]`.
pub fn darken(img: &Image, w: f64) -> Result<Image> {
    img.ensure_color_space(ColorSpace::LinearRgb)?;
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::invalid(format!("darkening weight {w} not in (0, 1]")));
    }
    Ok(img.map(|v| (v as f64 * w) as f32))
}

/// Heteroscedastic Gaussian shot noise plus Gaussian read noise:
/// `y = clamp(x + sqrt(max(x, 0)) * sigma_shot * e1 + sigma_read * e2)`
/// with `e1`, `e2` standard normal, drawn per sample in storage order.
/// Returns the noisy image and the number of clamped samples.
pub fn add_shot_read_noise<R: Rng + ?Sized>(
    img: &Image,
    sigma_shot: f64,
    sigma_read: f64,
    rng: &mut R,
) -> Result<(Image, usize)> {
    img.ensure_color_space(ColorSpace::LinearRgb)?;
    if !(sigma_shot >= 0.0 && sigma_read >= 0.0) {
        return Err(Error::invalid("noise sigmas must be non-negative"));
    }
    if sigma_shot == 0.0 && sigma_read == 0.0 {
        return Ok((img.clone(), 0));
    }
    let mut clamped = 0;
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let x = v as f64;
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let y = x + x.max(0.0).sqrt() * sigma_shot * e1 + sigma_read * e2;
            if !(0.0..=1.0).contains(&y) {
                clamped += 1;
            }
            y.clamp(0.0, 1.0) as f32
        })
        .collect();
    let out = Image::new(img.height(), img.width(), img.channels(), ColorSpace::LinearRgb, data)?;
    Ok((out, clamped))
}

pub fn validate_bits(bits: u32) -> Result<()> {
    match bits {
        8 | 10 | 12 | 16 => Ok(()),
        _ => Err(Error::invalid(format!("quantization depth {bits} not in {{8, 10, 12, 16}}"))),
    }
}

/// Rounds every sample to the nearest of `2^bits - 1` uniform steps on
/// `[0, 1]` (ties away from zero).
pub fn quantize(img: &Image, bits: u32) -> Result<Image> {
    validate_bits(bits)?;
    let levels = ((1u32 << bits) - 1) as f64;
    Ok(img.map(|v| ((v as f64 * levels).round() / levels) as f32))
}
