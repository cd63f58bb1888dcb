use std::path::Path;

use serde::Deserialize;
use tile_ensemble::enhancer::auto_gain;
use tile_ensemble::ensemble::{DEFAULT_OVERLAP, DEFAULT_TILE_PX};
use tile_ensemble::{BlendMode, EnhancerSpec, Error, GridConfig, Image, PredictorSpec, SimConfig, WeightFn};

use crate::CommonArgs;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Fixed(f32),
    Named(GainWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainWord {
    Auto,
}

impl Gain {
    pub fn parse(s: &str) -> Result<Gain, Error> {
        if s == "auto" {
            return Ok(Gain::Named(GainWord::Auto));
        }
        s.parse().map(Gain::Fixed).map_err(|_| Error::Config(format!("gain must be a number or 'auto', got '{s}'")))
    }

    pub fn resolve(self, dark: &Image) -> Result<f32, Error> {
        match self {
            Gain::Fixed(g) => Ok(g),
            Gain::Named(GainWord::Auto) => auto_gain(dark),
        }
    }
}

/// Every key is optional; command-line flags win over file values.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tile_size: usize,
    pub overlap: f64,
    pub weight: WeightFn,
    pub jitter: bool,
    pub enhancer: String,
    pub gain: Gain,
    pub predictor: String,
    pub mode: BlendMode,
    pub seed: u64,
    pub workers: usize,
    pub adapter_timeout_secs: Option<u64>,
    pub simulate: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tile_size: DEFAULT_TILE_PX,
            overlap: DEFAULT_OVERLAP,
            weight: WeightFn::Uniform,
            jitter: true,
            enhancer: "gain-gamma".into(),
            gain: Gain::Fixed(1.0),
            predictor: "const:0".into(),
            mode: BlendMode::Hard,
            seed: 0,
            workers: 0,
            adapter_timeout_secs: None,
            simulate: SimConfig::default(),
        }
    }
}

/// Fully parsed settings for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: GridConfig,
    pub enhancer: EnhancerSpec,
    pub enhancer_label: String,
    pub gain: Gain,
    pub predictor: PredictorSpec,
    pub mode: BlendMode,
    pub workers: usize,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, args: &CommonArgs) -> Result<(), Error> {
        if let Some(v) = args.tile_size {
            self.tile_size = v;
        }
        if let Some(v) = args.overlap {
            self.overlap = v;
        }
        if let Some(v) = args.weight {
            self.weight = v.into();
        }
        if args.no_jitter {
            self.jitter = false;
        }
        if let Some(v) = &args.enhancer {
            self.enhancer = v.clone();
        }
        if let Some(v) = &args.gain {
            self.gain = Gain::parse(v)?;
        }
        if let Some(v) = &args.predictor {
            self.predictor = v.clone();
        }
        if let Some(v) = &args.mode {
            self.mode = v.parse()?;
        }
        if let Some(v) = args.seed {
            self.seed = v;
        }
        if let Some(v) = args.workers {
            self.workers = v;
        }
        if let Some(v) = args.adapter_timeout {
            self.adapter_timeout_secs = Some(v);
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved, Error> {
        if self.tile_size < tile_ensemble::MIN_TILE_SIZE {
            return Err(Error::Config(format!(
                "tile size must be at least {}, got {}",
                tile_ensemble::MIN_TILE_SIZE,
                self.tile_size
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap must be in [0, 1), got {}", self.overlap)));
        }
        if let Gain::Fixed(g) = self.gain {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("gain must be positive, got {g}")));
            }
        }
        let mut enhancer: EnhancerSpec = self.enhancer.parse()?;
        if let EnhancerSpec::External { timeout_secs, .. } = &mut enhancer {
            *timeout_secs = self.adapter_timeout_secs;
        }
        let predictor: PredictorSpec = self.predictor.parse()?;
        let mut sim = self.simulate.clone();
        sim.master_seed = self.seed;
        sim.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Resolved {
            grid: GridConfig {
                tile_px: self.tile_size,
                overlap: self.overlap,
                weight: self.weight,
                jitter_seed: self.jitter.then_some(self.seed),
            },
            enhancer,
            enhancer_label: self.enhancer.clone(),
            gain: self.gain,
            predictor,
            mode: self.mode,
            workers: self.workers,
            sim,
        })
    }
}
