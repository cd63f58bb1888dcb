//! Camera response functions.
//!
//! `encode` maps linear irradiance to stored pixel values, `decode` is its
//! inverse. Both families fix 0 and 1 and are strictly increasing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

const MONOTONE_GRID: usize = 1024;
const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crf {
    /// `x -> x^(1/gamma)`.
    Gamma { gamma: f64 },
    /// `x -> p(x^(1/gamma))` with the cubic `p(t) = c1 t + c2 t^2 + c3 t^3`,
    /// `c1 + c2 + c3 = 1`, strictly increasing on `[0, 1]`.
    SigmoidPoly { gamma: f64, coeffs: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrfFamily {
    #[default]
    Gamma,
    SigmoidPoly,
    /// Either family with equal probability.
    Mixed,
}

impl Crf {
    pub fn gamma(gamma: f64) -> Result<Crf> {
        Crf::Gamma { gamma }.validated()
    }

    /// Gamma curve followed by an S-shaped cubic blend of strength
    /// `strength` in `[0, 1)`: `p(t) = (1 - s) t + s (3t^2 - 2t^3)`.
    pub fn sigmoid_poly(gamma: f64, strength: f64) -> Result<Crf> {
        if !(0.0..1.0).contains(&strength) {
            return Err(Error::invalid(format!("sigmoid strength {strength} not in [0, 1)")));
        }
        Crf::SigmoidPoly {
            gamma,
            coeffs: [1.0 - strength, 3.0 * strength, -2.0 * strength],
        }
        .validated()
    }

    fn validated(self) -> Result<Crf> {
        let gamma = self.gamma_exponent();
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        if let Crf::SigmoidPoly { coeffs, .. } = self {
            if (coeffs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("polynomial must map 1 to 1"));
            }
        }
        let mut prev = self.encode(0.0);
        if prev != 0.0 || (self.encode(1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("response must fix 0 and 1"));
        }
        for i in 1..=MONOTONE_GRID {
            let v = self.encode(i as f64 / MONOTONE_GRID as f64);
            if v <= prev {
                return Err(Error::invalid(format!("response is not strictly increasing near {i}/{MONOTONE_GRID}")));
            }
            prev = v;
        }
        Ok(self)
    }

    pub fn gamma_exponent(&self) -> f64 {
        match *self {
            Crf::Gamma { gamma } | Crf::SigmoidPoly { gamma, .. } => gamma,
        }
    }

    fn poly(coeffs: &[f64; 3], t: f64) -> f64 {
        t * (coeffs[0] + t * (coeffs[1] + t * coeffs[2]))
    }

    /// Linear value to encoded value. Inputs are clamped to `[0, 1]`.
    pub fn encode(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Crf::Gamma { gamma } => x.powf(1.0 / gamma),
            Crf::SigmoidPoly { gamma, coeffs } => Crf::poly(coeffs, x.powf(1.0 / gamma)),
        }
    }

    /// Encoded value to linear value. Inputs are clamped to `[0, 1]`.
    pub fn decode(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            Crf::Gamma { gamma } => y.powf(*gamma),
            Crf::SigmoidPoly { gamma, coeffs } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if Crf::poly(coeffs, mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (0.5 * (lo + hi)).powf(*gamma)
            }
        }
    }
}

/// Draws a response curve with `gamma` uniform in `gamma_range`. The
/// sigmoid family additionally draws its strength uniformly in `[0, 0.6]`.
pub fn sample_crf<R: Rng + ?Sized>(rng: &mut R, family: CrfFamily, gamma_range: [f64; 2]) -> Crf {
    let gamma = uniform(rng, gamma_range);
    let sigmoid = match family {
        CrfFamily::Gamma => false,
        CrfFamily::SigmoidPoly => true,
        CrfFamily::Mixed => rng.random_bool(0.5),
    };
    if sigmoid {
        let strength = uniform(rng, [0.0, 0.6]);
        Crf::sigmoid_poly(gamma, strength).expect("sampled parameters are valid")
    } else {
        Crf::gamma(gamma).expect("sampled gamma is positive")
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

fn count_out_of_range(img: &Image) -> usize {
    img.data().iter().filter(|v| !(0.0..=1.0).contains(*v)).count()
}

/// Applies `crf` to a linear image, producing an encoded (sRGB-like) image.
/// Returns the image and the number of samples clamped into `[0, 1]`.
pub fn apply_crf(img: &Image, crf: &Crf) -> Result<(Image, usize)> {
    img.ensure_color_space(ColorSpace::LinearRgb)?;
    let clamped = count_out_of_range(img);
    let out = img.map(|v| crf.encode(v as f64) as f32).relabel(ColorSpace::Srgb)?;
    Ok((out, clamped))
}

/// Inverts `crf` on an encoded image, producing a linear image. Returns the
/// image and the number of samples clamped into `[0, 1]`.
pub fn invert_crf(img: &Image, crf: &Crf) -> Result<(Image, usize)> {
    img.ensure_color_space(ColorSpace::Srgb)?;
    let clamped = count_out_of_range(img);
    let out = img.map(|v| crf.decode(v as f64) as f32).relabel(ColorSpace::LinearRgb)?;
    Ok((out, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_root_curve() {
        let crf = Crf::gamma(2.0).unwrap();
        assert_abs_diff_eq!(crf.encode(0.25), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(crf.decode(0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn sampled_curves_fix_endpoints_and_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for family in [CrfFamily::Gamma, CrfFamily::SigmoidPoly, CrfFamily::Mixed] {
            for _ in 0..50 {
                let crf = sample_crf(&mut rng, family, [1.8, 2.6]);
                assert_eq!(crf.encode(0.0), 0.0);
                assert_abs_diff_eq!(crf.encode(1.0), 1.0, epsilon = 1e-12);
                let mut prev = -1.0;
                for i in 0..=1024 {
                    let v = crf.encode(i as f64 / 1024.0);
                    assert!(v > prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn invalid_curves_rejected() {
        assert!(Crf::gamma(0.0).is_err());
        assert!(Crf::gamma(f64::NAN).is_err());
        assert!(Crf::sigmoid_poly(2.0, 1.0).is_err());
        // Non-monotone cubic.
        assert!(Crf::SigmoidPoly { gamma: 1.0, coeffs: [-0.5, 3.0, -1.5] }.validated().is_err());
    }

    #[test]
    fn identity_gamma_leaves_image_unchanged() {
        let img = Image::from_fn(3, 4, 3, ColorSpace::LinearRgb, |y, x, c| (y + x + c) as f32 / 9.0).unwrap();
        let crf = Crf::gamma(1.0).unwrap();
        let (enc, clamped) = apply_crf(&img, &crf).unwrap();
        assert_eq!(clamped, 0);
        assert_eq!(enc.data(), img.data());
    }

    /// Independent inverse: bisection on `encode` alone.
    fn bisect_inverse(crf: &Crf, y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if crf.encode(mid) < y {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn decode_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for family in [CrfFamily::Gamma, CrfFamily::SigmoidPoly] {
            let crf = sample_crf(&mut rng, family, [1.8, 2.6]);
            for i in 0..=200 {
                let y = i as f64 / 200.0;
                assert_abs_diff_eq!(crf.decode(y), bisect_inverse(&crf, y), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn random_round_trip_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let crf = sample_crf(&mut rng, CrfFamily::Mixed, [1.8, 2.6]);
        let data: Vec<f32> = (0..100_000).map(|_| rng.random::<f32>()).collect();
        let img = Image::new(100, 1000, 1, ColorSpace::LinearRgb, data).unwrap();
        let (enc, _) = apply_crf(&img, &crf).unwrap();
        let (dec, _) = invert_crf(&enc, &crf).unwrap();
        let err = img.data().iter().zip(dec.data()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(err <= 1e-4, "round trip error {err}");
    }

    #[test]
    fn wrong_space_rejected() {
        let img = Image::filled(2, 2, ColorSpace::Srgb, &[0.5]).unwrap();
        assert!(apply_crf(&img, &Crf::gamma(2.0).unwrap()).is_err());
    }
}
