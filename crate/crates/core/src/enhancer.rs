//! Tile enhancement operators.
//!
//! An [`Enhancer`] maps a `D x D` CIELAB tile and a gain constant to a
//! CIELAB tile of the same shape. The built-in operators are classical
//! stand-ins for a trained network; [`EnhancerSpec::External`] forwards
//! tiles to another process over the ENH1 protocol (see [`crate::adapter`]).

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterPool, Frame, FrameKind, DEFAULT_TIMEOUT};
use crate::color::{lab_to_linear_rgb, lab_to_srgb, linear_rgb_to_lab, mean_linear_luminance, srgb_to_lab};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image, Tile};

/// Display gamma of the GAIN_GAMMA tone curve.
pub const TONE_GAMMA: f64 = 2.2;
/// Target mean linear luminance of the automatic gain heuristic.
pub const AUTO_GAIN_TARGET: f64 = 0.35;
const AUTO_GAIN_MAX: f64 = 1000.0;

/// Invocation index used for the single whole-image (long-scale) tile.
pub const LONG_SCALE_INVOCATION: u64 = u64::MAX;

pub trait Enhancer: Send + Sync {
    /// Enhances one LAB tile. `invocation` identifies the call within a run
    /// (the canonical tile index) so stochastic operators stay reproducible
    /// under any scheduling.
    fn enhance(&self, tile: &Tile, gain: f32, invocation: u64) -> Result<Tile>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnhancerSpec {
    Identity,
    GainGamma {
        #[serde(default = "yes")]
        tone_curve: bool,
        #[serde(default = "yes")]
        chroma_smoothing: bool,
    },
    /// External process; `command[0]` is the program, the rest its arguments.
    External {
        command: Vec<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
    NoisyWrapper {
        inner: Box<EnhancerSpec>,
        sigma: f64,
        seed: u64,
    },
}

fn yes() -> bool {
    true
}

impl EnhancerSpec {
    pub fn gain_gamma() -> EnhancerSpec {
        EnhancerSpec::GainGamma { tone_curve: true, chroma_smoothing: true }
    }

    pub fn external(command: Vec<String>) -> EnhancerSpec {
        EnhancerSpec::External { command, timeout_secs: None }
    }

    pub fn noisy(inner: EnhancerSpec, sigma: f64, seed: u64) -> EnhancerSpec {
        EnhancerSpec::NoisyWrapper { inner: Box::new(inner), sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnhancerSpec::External { command, .. } if command.is_empty() => {
                Err(Error::Config("external enhancer needs a command".into()))
            }
            EnhancerSpec::NoisyWrapper { inner, sigma, .. } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Enhancer>> {
        self.validate()?;
        Ok(match self {
            EnhancerSpec::Identity => Box::new(IdentityEnhancer),
            EnhancerSpec::GainGamma { tone_curve, chroma_smoothing } => Box::new(GainGamma {
                tone_curve: *tone_curve,
                chroma_smoothing: *chroma_smoothing,
            }),
            EnhancerSpec::External { command, timeout_secs } => Box::new(ExternalEnhancer::new(
                command.clone(),
                timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_TIMEOUT),
            )),
            EnhancerSpec::NoisyWrapper { inner, sigma, seed } => Box::new(NoisyWrapper {
                inner: inner.build()?,
                sigma: *sigma,
                seed: *seed,
            }),
        })
    }
}

/// Parses `identity`, `gain-gamma` or `exec:<command>`. The command is
/// split on whitespace.
impl std::str::FromStr for EnhancerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(EnhancerSpec::Identity),
            "gain-gamma" => Ok(EnhancerSpec::gain_gamma()),
            _ => {
                let cmd = s
                    .strip_prefix("exec:")
                    .ok_or_else(|| Error::Config(format!("unrecognized enhancer '{s}'")))?;
                let spec = EnhancerSpec::external(cmd.split_whitespace().map(String::from).collect());
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

/// Positive gain check shared by all entry points.
pub fn validate_gain(gain: f32) -> Result<()> {
    if gain.is_finite() && gain > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("gain must be positive, got {gain}")))
    }
}

/// Gain that brings the mean linear luminance of `dark` to
/// [`AUTO_GAIN_TARGET`], capped at 1000. This is a convenience heuristic.
pub fn auto_gain(dark: &Image) -> Result<f32> {
    let mean = mean_linear_luminance(dark)?;
    Ok((AUTO_GAIN_TARGET / mean.max(AUTO_GAIN_TARGET / AUTO_GAIN_MAX)) as f32)
}

fn require_lab(tile: &Tile) -> Result<()> {
    tile.image().ensure_color_space(ColorSpace::Lab)
}

pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn enhance(&self, tile: &Tile, _gain: f32, _invocation: u64) -> Result<Tile> {
        require_lab(tile)?;
        Ok(tile.clone())
    }
}

/// Gain in linear light, optional tone curve `v^(1/2.2)` (applied to linear
/// values), then an edge-preserving smoothing of the chroma channels.
///
/// The chroma filter is a 7x7 cross-bilateral filter guided by L whose
/// range bandwidth follows the tile's own L spread, so the result at a
/// pixel depends on the whole tile it was seen in.
pub struct GainGamma {
    pub tone_curve: bool,
    pub chroma_smoothing: bool,
}

const SMOOTH_RADIUS: usize = 3;
const SMOOTH_SPATIAL_SIGMA: f64 = 2.0;
const SMOOTH_RANGE_FLOOR: f64 = 2.0;
const SMOOTH_RANGE_SCALE: f64 = 0.5;

impl GainGamma {
    fn smooth_chroma(lab: &mut [f32], d: usize) {
        let n = d * d;
        let (l, ab) = lab.split_at_mut(n);
        let mean_l = l.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let std_l = (l.iter().map(|&v| (v as f64 - mean_l).powi(2)).sum::<f64>() / n as f64).sqrt();
        let range_sigma = SMOOTH_RANGE_FLOOR + SMOOTH_RANGE_SCALE * std_l;
        let inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
        let r = SMOOTH_RADIUS as isize;
        let spatial: Vec<f64> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * SMOOTH_SPATIAL_SIGMA * SMOOTH_SPATIAL_SIGMA)).exp())
            .collect();
        let src = ab.to_vec();
        let k = 2 * SMOOTH_RADIUS + 1;
        for y in 0..d {
            for x in 0..d {
                let l0 = l[y * d + x] as f64;
                let (mut wsum, mut a, mut b) = (0.0, 0.0, 0.0);
                let y_lo = y.saturating_sub(SMOOTH_RADIUS);
                let y_hi = (y + SMOOTH_RADIUS).min(d - 1);
                let x_lo = x.saturating_sub(SMOOTH_RADIUS);
                let x_hi = (x + SMOOTH_RADIUS).min(d - 1);
                for yy in y_lo..=y_hi {
                    for xx in x_lo..=x_hi {
                        let i = yy * d + xx;
                        let dl = l[i] as f64 - l0;
                        let ks = spatial[(yy + SMOOTH_RADIUS - y) * k + (xx + SMOOTH_RADIUS - x)];
                        let w = ks * (-dl * dl * inv_range).exp();
                        wsum += w;
                        a += w * src[i] as f64;
                        b += w * src[n + i] as f64;
                    }
                }
                ab[y * d + x] = (a / wsum) as f32;
                ab[n + y * d + x] = (b / wsum) as f32;
            }
        }
    }
}

impl Enhancer for GainGamma {
    fn enhance(&self, tile: &Tile, gain: f32, _invocation: u64) -> Result<Tile> {
        require_lab(tile)?;
        validate_gain(gain)?;
        let img = tile.image();
        let n = img.pixel_count();
        let src = img.data();
        let mut out = vec![0f32; n * 3];
        for i in 0..n {
            let rgb = lab_to_linear_rgb([src[i] as f64, src[n + i] as f64, src[2 * n + i] as f64]);
            let rgb = rgb.map(|v| {
                let v = (v.clamp(0.0, 1.0) * gain as f64).clamp(0.0, 1.0);
                if self.tone_curve {
                    v.powf(1.0 / TONE_GAMMA)
                } else {
                    v
                }
            });
            let lab = linear_rgb_to_lab(rgb);
            out[i] = lab[0] as f32;
            out[n + i] = lab[1] as f32;
            out[2 * n + i] = lab[2] as f32;
        }
        if self.chroma_smoothing {
            GainGamma::smooth_chroma(&mut out, tile.size());
        }
        tile.with_image(Image::new(img.height(), img.width(), 3, ColorSpace::Lab, out)?)
    }
}

/// Adds an i.i.d. zero-mean Gaussian field to the inner enhancer's output.
/// The perturbation is applied in sRGB display units (std `sigma`), then
/// converted back to LAB. The field for a call is a pure function of
/// `(seed, invocation)`.
pub struct NoisyWrapper {
    pub inner: Box<dyn Enhancer>,
    pub sigma: f64,
    pub seed: u64,
}

impl NoisyWrapper {
    pub fn field_rng(&self, invocation: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(invocation);
        rng
    }
}

impl Enhancer for NoisyWrapper {
    fn enhance(&self, tile: &Tile, gain: f32, invocation: u64) -> Result<Tile> {
        let base = self.inner.enhance(tile, gain, invocation)?;
        if self.sigma == 0.0 {
            return Ok(base);
        }
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let mut rng = self.field_rng(invocation);
        let img = base.image();
        let n = img.pixel_count();
        let src = img.data();
        let mut out = vec![0f32; n * 3];
        for i in 0..n {
            let rgb = lab_to_srgb([src[i] as f64, src[n + i] as f64, src[2 * n + i] as f64]);
            let rgb = rgb.map(|v| v + normal.sample(&mut rng));
            let lab = srgb_to_lab(rgb.map(|v| v.clamp(0.0, 1.0)));
            out[i] = lab[0] as f32;
            out[n + i] = lab[1] as f32;
            out[2 * n + i] = lab[2] as f32;
        }
        base.with_image(Image::new(img.height(), img.width(), 3, ColorSpace::Lab, out)?)
    }
}

/// Forwards tiles to an external process over ENH1. The gain is sent
/// unapplied. Any adapter failure aborts the call.
pub struct ExternalEnhancer {
    pool: AdapterPool,
}

impl ExternalEnhancer {
    pub fn new(command: Vec<String>, timeout: Duration) -> ExternalEnhancer {
        ExternalEnhancer { pool: AdapterPool::new(command, FrameKind::Enhance, timeout) }
    }
}

impl Enhancer for ExternalEnhancer {
    fn enhance(&self, tile: &Tile, gain: f32, _invocation: u64) -> Result<Tile> {
        require_lab(tile)?;
        let d = tile.size() as u32;
        let c = tile.channels() as u32;
        let request = Frame::enhance_request(d, c, gain, tile.image().data().to_vec());
        let response = self.pool.call(&request, (d, d, c))?;
        let img = Image::new(d as usize, d as usize, c as usize, ColorSpace::Lab, response.samples)?;
        tile.with_image(img)
    }
}
