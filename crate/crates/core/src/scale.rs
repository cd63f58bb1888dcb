//! Two-class scale maps and blending of short- and long-scale estimates.
//!
//! Class 0 selects the short-scale (tile-averaged) estimate and class 1 the
//! long-scale (whole-image) estimate. A map stores `p_long` per pixel.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterPool, Frame, FrameKind, DEFAULT_TIMEOUT};
use crate::color::{rgb_to_lab, srgb_to_lab};
use crate::enhancer::Enhancer;
use crate::ensemble::{averaged_estimate, long_scale_estimate, make_tile_grid, WeightFn};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};
use crate::io::{read_image, write_png, write_rawf32, PngDepth};

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMap {
    height: usize,
    width: usize,
    p_long: Vec<f32>,
    hard: bool,
}

impl ScaleMap {
    pub fn new(height: usize, width: usize, p_long: Vec<f32>) -> Result<ScaleMap> {
        if p_long.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} map"), format!("{} values", p_long.len())));
        }
        if let Some(p) = p_long.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let hard = p_long.iter().all(|&p| p == 0.0 || p == 1.0);
        Ok(ScaleMap { height, width, p_long, hard })
    }

    pub fn constant(height: usize, width: usize, p: f32) -> Result<ScaleMap> {
        ScaleMap::new(height, width, vec![p; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn p_long(&self) -> &[f32] {
        &self.p_long
    }

    pub fn is_hard(&self) -> bool {
        self.hard
    }

    /// Class 1 where `p_long > 0.5`; ties go to the short scale.
    pub fn binarized(&self) -> ScaleMap {
        let p = self.p_long.iter().map(|&p| if p > 0.5 { 1.0 } else { 0.0 }).collect();
        ScaleMap { height: self.height, width: self.width, p_long: p, hard: true }
    }

    /// Swaps the two classes.
    pub fn complement(&self) -> ScaleMap {
        let p = self.p_long.iter().map(|&p| 1.0 - p).collect();
        ScaleMap { height: self.height, width: self.width, p_long: p, hard: self.hard }
    }

    /// Single-channel image of `p_long`.
    pub fn to_image(&self) -> Image {
        Image::new(self.height, self.width, 1, ColorSpace::Srgb, self.p_long.clone()).expect("valid map")
    }

    pub fn from_image(img: &Image) -> Result<ScaleMap> {
        if img.channels() != 1 {
            return Err(Error::invalid(format!("scale map must have 1 channel, got {}", img.channels())));
        }
        ScaleMap::new(img.height(), img.width(), img.data().to_vec())
    }

    /// Writes an 8-bit grayscale PNG (`round(p * 255)`) or a lossless
    /// `.rawf32`, chosen by extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("rawf32") => write_rawf32(path, &self.to_image()),
            _ => write_png(path, &self.to_image(), PngDepth::Eight),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScaleMap> {
        ScaleMap::from_image(&read_image(path)?)
    }

    fn check_shape(&self, img: &Image) -> Result<()> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(())
    }
}

fn pixel_sq_err(a: &Image, b: &Image, i: usize) -> f64 {
    (0..a.channels())
        .map(|c| {
            let d = a.plane(c)[i] as f64 - b.plane(c)[i] as f64;
            d * d
        })
        .sum()
}

/// Picks, per pixel, whichever estimate has the smaller squared error to
/// `gt` summed over channels. Ties go to the short scale.
pub fn oracle_mask(short: &Image, long: &Image, gt: &Image) -> Result<ScaleMap> {
    short.ensure_same_shape(long)?;
    short.ensure_same_shape(gt)?;
    let cs = gt.color_space();
    short.ensure_color_space(cs)?;
    long.ensure_color_space(cs)?;
    let p = (0..gt.pixel_count())
        .map(|i| if pixel_sq_err(long, gt, i) < pixel_sq_err(short, gt, i) { 1.0 } else { 0.0 })
        .collect();
    ScaleMap::new(gt.height(), gt.width(), p)
}

fn check_pair(short: &Image, long: &Image, map: &ScaleMap) -> Result<()> {
    short.ensure_same_shape(long)?;
    short.ensure_color_space(long.color_space())?;
    map.check_shape(short)
}

/// Takes `long` where the map is 1 and `short` where it is 0.
pub fn blend_hard(short: &Image, long: &Image, map: &ScaleMap) -> Result<Image> {
    check_pair(short, long, map)?;
    if !map.is_hard() {
        return Err(Error::invalid("hard blending needs a binary scale map"));
    }
    let n = short.pixel_count();
    let data = (0..short.data().len())
        .map(|k| if map.p_long[k % n] == 1.0 { long.data()[k] } else { short.data()[k] })
        .collect();
    Image::new(short.height(), short.width(), short.channels(), short.color_space(), data)
}

/// Per-pixel expectation `(1 - p) * short + p * long`.
pub fn blend_soft(short: &Image, long: &Image, map: &ScaleMap) -> Result<Image> {
    check_pair(short, long, map)?;
    let n = short.pixel_count();
    let data = short
        .data()
        .iter()
        .zip(long.data())
        .enumerate()
        .map(|(k, (&s, &l))| {
            let p = map.p_long[k % n] as f64;
            let v = ((1.0 - p) * s as f64 + p * l as f64) as f32;
            v.clamp(s.min(l), s.max(l))
        })
        .collect();
    Image::new(short.height(), short.width(), short.channels(), short.color_space(), data)
}

/// Box mean (side `2r + 1`, edge-clamped) along rows of a `h x w` field.
fn box_rows(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let side = (2 * r + 1) as f64;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let s: f64 = (x as i64 - r as i64..=x as i64 + r as i64)
                .map(|k| row[k.clamp(0, w as i64 - 1) as usize])
                .sum();
            out[y * w + x] = s / side;
        }
    }
    out
}

fn transpose(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

/// Long scale where the local mean of `L / 100` is below `threshold`.
pub fn luminance_scale_predictor(dark: &Image, radius: usize, threshold: f64) -> Result<ScaleMap> {
    dark.ensure_color_space(ColorSpace::Srgb)?;
    let (h, w) = (dark.height(), dark.width());
    let lum: Vec<f64> = (0..dark.pixel_count())
        .map(|i| {
            let px = |c: usize| dark.plane(c.min(dark.channels() - 1))[i] as f64;
            srgb_to_lab([px(0), px(1), px(2)])[0] / 100.0
        })
        .collect();
    let rows = box_rows(&lum, h, w, radius);
    let cols = transpose(&box_rows(&transpose(&rows, h, w), w, h, radius), w, h);
    let p = cols.iter().map(|&v| if v < threshold { 1.0 } else { 0.0 }).collect();
    ScaleMap::new(h, w, p)
}

/// Sends the dark image in LAB over SCL1 and reads back an `H x W` map.
pub fn external_scale_predictor(pool: &AdapterPool, dark: &Image) -> Result<ScaleMap> {
    let lab = rgb_to_lab(dark)?;
    let (h, w) = (dark.height() as u32, dark.width() as u32);
    let request = Frame::scale_request(h, w, 3, lab.into_data());
    let response = pool.call(&request, (h, w, 1))?;
    ScaleMap::new(h as usize, w as usize, response.samples.iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Constant { p: f32 },
    Luma { radius: usize, threshold: f64 },
    External { command: Vec<String> },
    Oracle,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Constant { p: 0.0 }
    }
}

impl PredictorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorSpec::Constant { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::Config(format!("constant probability {p} outside [0, 1]")))
            }
            PredictorSpec::Luma { threshold, .. } if !threshold.is_finite() => {
                Err(Error::Config("luma threshold must be finite".into()))
            }
            PredictorSpec::External { command } if command.is_empty() => {
                Err(Error::Config("external predictor needs a command".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Predictor> {
        self.validate()?;
        Ok(match self {
            PredictorSpec::Constant { p } => Predictor::Constant(*p),
            PredictorSpec::Luma { radius, threshold } => Predictor::Luma { radius: *radius, threshold: *threshold },
            PredictorSpec::External { command } => {
                Predictor::External(AdapterPool::new(command.clone(), FrameKind::Scale, DEFAULT_TIMEOUT))
            }
            PredictorSpec::Oracle => Predictor::Oracle,
        })
    }
}

/// Parses `const:<p>`, `luma:<radius>,<threshold>`, `exec:<command>` or
/// `oracle`. The command is split on whitespace.
impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized predictor '{s}'"));
        if s == "oracle" {
            return Ok(PredictorSpec::Oracle);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let spec = match kind {
            "const" => PredictorSpec::Constant { p: arg.trim().parse().map_err(|_| bad())? },
            "luma" => {
                let (r, t) = arg.split_once(',').ok_or_else(bad)?;
                PredictorSpec::Luma {
                    radius: r.trim().parse().map_err(|_| bad())?,
                    threshold: t.trim().parse().map_err(|_| bad())?,
                }
            }
            "exec" => PredictorSpec::External { command: arg.split_whitespace().map(String::from).collect() },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorSpec::Constant { p } => write!(f, "const:{p}"),
            PredictorSpec::Luma { radius, threshold } => write!(f, "luma:{radius},{threshold}"),
            PredictorSpec::External { command } => write!(f, "exec:{}", command.join(" ")),
            PredictorSpec::Oracle => write!(f, "oracle"),
        }
    }
}

pub enum Predictor {
    Constant(f32),
    Luma { radius: usize, threshold: f64 },
    External(AdapterPool),
    Oracle,
}

impl Predictor {
    /// Scale map for `dark`. The oracle needs the short and long estimates
    /// and ground truth.
    pub fn predict(&self, dark: &Image, oracle_inputs: Option<(&Image, &Image, &Image)>) -> Result<ScaleMap> {
        match self {
            Predictor::Constant(p) => ScaleMap::constant(dark.height(), dark.width(), *p),
            Predictor::Luma { radius, threshold } => luminance_scale_predictor(dark, *radius, *threshold),
            Predictor::External(pool) => external_scale_predictor(pool, dark),
            Predictor::Oracle => {
                let (short, long, gt) =
                    oracle_inputs.ok_or_else(|| Error::Config("oracle predictor needs ground truth".into()))?;
                oracle_mask(short, long, gt)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    #[default]
    Hard,
    Soft,
}

impl FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(BlendMode::Hard),
            "soft" => Ok(BlendMode::Soft),
            _ => Err(Error::Config(format!("unrecognized blend mode '{s}'"))),
        }
    }
}

/// Blends with `mode`. Hard mode binarizes soft maps first.
pub fn blend(short: &Image, long: &Image, map: &ScaleMap, mode: BlendMode) -> Result<Image> {
    match mode {
        BlendMode::Hard if map.is_hard() => blend_hard(short, long, map),
        BlendMode::Hard => blend_hard(short, long, &map.binarized()),
        BlendMode::Soft => blend_soft(short, long, map),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub tile_px: usize,
    pub overlap: f64,
    pub weight: WeightFn,
    pub jitter_seed: Option<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            tile_px: crate::ensemble::DEFAULT_TILE_PX,
            overlap: crate::ensemble::DEFAULT_OVERLAP,
            weight: WeightFn::Uniform,
            jitter_seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub short: Image,
    pub long: Image,
    pub map: ScaleMap,
    pub output: Image,
}

/// Short- and long-scale estimates of `dark`, a scale map from `predictor`
/// and their blend. `gt` is required by the oracle predictor.
pub fn ensemble_estimate(
    dark: &Image,
    enhancer: &dyn Enhancer,
    grid: &GridConfig,
    gain: f32,
    predictor: &Predictor,
    mode: BlendMode,
    gt: Option<&Image>,
) -> Result<EnsembleOutput> {
    if matches!(predictor, Predictor::Oracle) && gt.is_none() {
        return Err(Error::Config("oracle predictor needs ground truth".into()));
    }
    let tile_grid = make_tile_grid(dark.height(), dark.width(), grid.tile_px, grid.overlap, grid.jitter_seed)?;
    let short = averaged_estimate(dark, enhancer, &tile_grid, grid.weight, gain)?.image;
    let long = long_scale_estimate(dark, enhancer, grid.tile_px, gain)?;
    let map = predictor.predict(dark, gt.map(|g| (&short, &long, g)))?;
    let output = blend(&short, &long, &map, mode)?;
    Ok(EnsembleOutput { short, long, map, output })
}

impl EnsembleOutput {
    /// Writes `short.rawf32`, `long.rawf32`, `scale.rawf32` and `scale.png`
    /// under `dir` with the given file stem prefix.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rawf32(&dir.join(format!("{stem}_short.rawf32")), &self.short)?;
        write_rawf32(&dir.join(format!("{stem}_long.rawf32")), &self.long)?;
        self.map.save(dir.join(format!("{stem}_scale.rawf32")))?;
        self.map.save(dir.join(format!("{stem}_scale.png")))?;
        Ok(())
    }
}
