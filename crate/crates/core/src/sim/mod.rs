//! Simulated dark/bright training pairs.
//!
//! A well-exposed sRGB image is linearized through a random inverse camera
//! response, scaled down by a random weight, corrupted with shot and read
//! noise, re-encoded through a second random response and quantized. Every
//! random draw for item `i` comes from a ChaCha20 stream keyed by
//! `(master_seed, i)`, so results do not depend on how items are scheduled.

mod crf;
mod noise;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crf::{apply_crf, invert_crf, sample_crf, Crf, CrfFamily};
pub use noise::{add_shot_read_noise, darken, quantize, validate_bits};

use crate::color::to_rgb;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};
use crate::io::{list_images, read_image, write_image_with_depth, PngDepth};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub gamma_range: [f64; 2],
    pub darken_range: [f64; 2],
    pub shot_sigma_range: [f64; 2],
    pub read_sigma_range: [f64; 2],
    pub quant_bits: u32,
    pub master_seed: u64,
    pub crf_family: CrfFamily,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gamma_range: [1.8, 2.6],
            darken_range: [0.01, 0.25],
            shot_sigma_range: [0.005, 0.05],
            read_sigma_range: [0.001, 0.02],
            quant_bits: 8,
            master_seed: 0,
            crf_family: CrfFamily::Gamma,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, r: [f64; 2], min_exclusive: bool| -> Result<()> {
            let lo_ok = if min_exclusive { r[0] > 0.0 } else { r[0] >= 0.0 };
            if !(r[0].is_finite() && r[1].is_finite() && lo_ok && r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} = {r:?} is not a valid range")));
            }
            Ok(())
        };
        check("gamma_range", self.gamma_range, true)?;
        check("darken_range", self.darken_range, true)?;
        if self.darken_range[1] > 1.0 {
            return Err(Error::Config("darken_range must stay within (0, 1]".into()));
        }
        check("shot_sigma_range", self.shot_sigma_range, false)?;
        check("read_sigma_range", self.read_sigma_range, false)?;
        validate_bits(self.quant_bits).map_err(|e| Error::Config(e.to_string()))
    }

    /// The random stream for one item.
    pub fn item_rng(&self, item_index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(item_index);
        rng
    }
}

/// Parameters drawn for one simulated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub gamma1: f64,
    pub gamma2: f64,
    pub crf1: Crf,
    pub crf2: Crf,
    pub w: f64,
    pub sigma_shot: f64,
    pub sigma_read: f64,
    pub clamp_count: usize,
}

#[derive(Debug, Clone)]
pub struct SimPair {
    pub dark: Image,
    pub bright: Image,
    pub provenance: Provenance,
}

/// Simulates the dark counterpart of `bright`. The result is a pure function
/// of `(cfg, item_index, bright)`.
pub fn simulate_pair(bright: &Image, cfg: &SimConfig, item_index: u64) -> Result<SimPair> {
    cfg.validate()?;
    bright.ensure_color_space(ColorSpace::Srgb)?;
    let mut rng = cfg.item_rng(item_index);
    let crf1 = sample_crf(&mut rng, cfg.crf_family, cfg.gamma_range);
    let crf2 = sample_crf(&mut rng, cfg.crf_family, cfg.gamma_range);
    let w = crf::uniform(&mut rng, cfg.darken_range);
    let sigma_shot = crf::uniform(&mut rng, cfg.shot_sigma_range);
    let sigma_read = crf::uniform(&mut rng, cfg.read_sigma_range);

    let (linear, c1) = invert_crf(bright, &crf1)?;
    let dim = darken(&linear, w)?;
    let (noisy, c2) = add_shot_read_noise(&dim, sigma_shot, sigma_read, &mut rng)?;
    let (encoded, c3) = apply_crf(&noisy, &crf2)?;
    let dark = quantize(&encoded, cfg.quant_bits)?;

    Ok(SimPair {
        dark,
        bright: bright.clone(),
        provenance: Provenance {
            gamma1: crf1.gamma_exponent(),
            gamma2: crf2.gamma_exponent(),
            crf1,
            crf2,
            w,
            sigma_shot,
            sigma_read,
            clamp_count: c1 + c2 + c3,
        },
    })
}

/// One line of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub pair_id: u64,
    pub dark: String,
    pub bright: String,
    pub source: String,
    #[serde(flatten)]
    pub provenance: Provenance,
}

pub fn pair_file_names(index: u64) -> (String, String) {
    (format!("dark_{index:04}.png"), format!("bright_{index:04}.png"))
}

/// Simulates `count` pairs from the images in `corpus_dir` (item `i` uses
/// the `i mod n`-th file in name order) and writes them with a
/// `manifest.jsonl` into `out_dir`. Items run on the current rayon pool;
/// output is identical for any pool size.
pub fn generate_dataset(corpus_dir: &Path, out_dir: &Path, cfg: &SimConfig, count: usize) -> Result<PathBuf> {
    cfg.validate()?;
    if !corpus_dir.is_dir() {
        return Err(Error::io(
            corpus_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let corpus = list_images(corpus_dir)?;
    if corpus.is_empty() && count > 0 {
        return Err(Error::invalid(format!("{}: corpus contains no images", corpus_dir.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let depth = if cfg.quant_bits > 8 { PngDepth::Sixteen } else { PngDepth::Eight };

    let records: Vec<ManifestRecord> = (0..count as u64)
        .into_par_iter()
        .map(|i| -> Result<ManifestRecord> {
            let source = &corpus[i as usize % corpus.len()];
            let bright = to_rgb(&read_image(source)?);
            let pair = simulate_pair(&bright, cfg, i)?;
            let (dark_name, bright_name) = pair_file_names(i);
            write_image_with_depth(out_dir.join(&dark_name), &pair.dark, depth)?;
            write_image_with_depth(out_dir.join(&bright_name), &pair.bright, depth)?;
            Ok(ManifestRecord {
                pair_id: i,
                dark: dark_name,
                bright: bright_name,
                source: source.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                provenance: pair.provenance,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = out_dir.join(MANIFEST_NAME);
    let mut buf = Vec::new();
    for rec in &records {
        serde_json::to_writer(&mut buf, rec).expect("manifest records serialize");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    file.write_all(&buf).map_err(|e| Error::io(&manifest, e))?;
    log::info!("wrote {} pairs to {}", records.len(), out_dir.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::mean_linear_luminance;
    use crate::io::write_image;
    use crate::pattern::Scene;

    fn forced_identity() -> SimConfig {
        SimConfig {
            gamma_range: [1.0, 1.0],
            darken_range: [1.0, 1.0],
            shot_sigma_range: [0.0, 0.0],
            read_sigma_range: [0.0, 0.0],
            ..SimConfig::default()
        }
    }

    #[test]
    fn degenerate_config_reduces_to_quantize() {
        let bright = Scene::new(7).render(64, 80);
        let pair = simulate_pair(&bright, &forced_identity(), 3).unwrap();
        assert_eq!(pair.dark, quantize(&bright, 8).unwrap());
        assert_eq!(pair.provenance.clamp_count, 0);
    }

    #[test]
    fn identity_family_reduces_to_scaled_noise() {
        let cfg = SimConfig {
            gamma_range: [1.0, 1.0],
            darken_range: [0.2, 0.2],
            shot_sigma_range: [0.01, 0.01],
            read_sigma_range: [0.002, 0.002],
            ..SimConfig::default()
        };
        let bright = Scene::new(8).render(40, 40);
        let pair = simulate_pair(&bright, &cfg, 5).unwrap();
        // Replay the documented draw order by hand.
        let mut rng = cfg.item_rng(5);
        let _ = sample_crf(&mut rng, cfg.crf_family, cfg.gamma_range);
        let _ = sample_crf(&mut rng, cfg.crf_family, cfg.gamma_range);
        let _ = crf::uniform(&mut rng, cfg.darken_range);
        let _ = crf::uniform(&mut rng, cfg.shot_sigma_range);
        let _ = crf::uniform(&mut rng, cfg.read_sigma_range);
        let lin = bright.clone().relabel(ColorSpace::LinearRgb).unwrap();
        let (noisy, _) = add_shot_read_noise(&darken(&lin, 0.2).unwrap(), 0.01, 0.002, &mut rng).unwrap();
        let expected = quantize(&noisy, 8).unwrap();
        assert_eq!(pair.dark.data(), expected.data());
    }

    #[test]
    fn same_seed_and_index_is_bit_identical() {
        let bright = Scene::new(1).render(48, 64);
        let cfg = SimConfig { master_seed: 42, ..SimConfig::default() };
        let a = simulate_pair(&bright, &cfg, 17).unwrap();
        let b = simulate_pair(&bright, &cfg, 17).unwrap();
        assert_eq!(a.dark, b.dark);
        assert_eq!(a.provenance, b.provenance);
        let c = simulate_pair(&bright, &cfg, 18).unwrap();
        assert_ne!(a.dark, c.dark);
    }

    #[test]
    fn dark_is_darker_on_fifty_scenes() {
        let cfg = SimConfig { master_seed: 3, ..SimConfig::default() };
        for i in 0..50u64 {
            let bright = Scene::new(100 + i).render(48, 48);
            let pair = simulate_pair(&bright, &cfg, i).unwrap();
            assert!(pair.provenance.w < 1.0 && pair.provenance.gamma2 >= 1.0);
            let lb = mean_linear_luminance(&bright).unwrap();
            let ld = mean_linear_luminance(&pair.dark).unwrap();
            assert!(ld < lb, "scene {i}: dark {ld} >= bright {lb}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig { gamma_range: [2.0, 1.0], ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { quant_bits: 7, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { darken_range: [0.0, 0.5], ..SimConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let corpus = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write_image(corpus.path().join(format!("img{i}.png")), &Scene::new(i).render(40, 56)).unwrap();
        }
        let cfg = SimConfig { master_seed: 7, ..SimConfig::default() };

        let empty = tempfile::tempdir().unwrap();
        let m = generate_dataset(corpus.path(), empty.path(), &cfg, 0).unwrap();
        assert_eq!(fs::read_to_string(&m).unwrap(), "");
        assert_eq!(fs::read_dir(empty.path()).unwrap().count(), 1);

        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let ma = generate_dataset(corpus.path(), out_a.path(), &cfg, 10).unwrap();
        let mb = generate_dataset(corpus.path(), out_b.path(), &cfg, 10).unwrap();
        let text = fs::read_to_string(&ma).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text, fs::read_to_string(&mb).unwrap());
        let pngs = fs::read_dir(out_a.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png")
            .count();
        assert_eq!(pngs, 20);
        let rec: ManifestRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec.dark, "dark_0000.png");
        assert_eq!(rec.source, "img0.png");
    }

    #[test]
    fn dataset_errors() {
        let empty = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let cfg = SimConfig::default();
        assert!(generate_dataset(empty.path(), out.path(), &cfg, 2).is_err());
        assert!(generate_dataset(&empty.path().join("missing"), out.path(), &cfg, 0).is_err());
    }
}
