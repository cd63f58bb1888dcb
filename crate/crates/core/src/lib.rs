//! Tile-averaging ensemble for low-light image enhancement.
//!
//! An enhancer that looks at local crops gives answers that depend on where
//! the crop was taken. This crate runs the enhancer on many overlapping
//! tiles, averages their estimates per pixel, and blends the result with a
//! whole-image (long-scale) estimate using a per-pixel scale map.
//!
//! Also included: a synthetic dark/bright pair generator, CIELAB and sRGB
//! conversions, bilinear window resampling, a framed subprocess protocol
//! for external models, and PSNR/SSIM evaluation.

pub mod adapter;
pub mod color;
pub mod enhancer;
pub mod ensemble;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pattern;
pub mod resample;
pub mod scale;
pub mod sim;
pub mod window;

pub use adapter::{AdapterError, AdapterPool, Frame, FrameKind};
pub use enhancer::{auto_gain, Enhancer, EnhancerSpec};
pub use ensemble::{
    averaged_estimate, crop_disagreement, long_scale_estimate, make_tile_grid, AveragedEstimate, Disagreement,
    TileGrid, WeightFn,
};
pub use error::{Error, Result};
pub use image::{ColorSpace, Image, Tile, MIN_TILE_SIZE};
pub use metrics::{evaluate_dataset, evaluate_files, psnr, ssim, EvalReport, EvalRow};
pub use scale::{
    blend, blend_hard, blend_soft, ensemble_estimate, oracle_mask, BlendMode, EnsembleOutput, GridConfig, Predictor,
    PredictorSpec, ScaleMap,
};
pub use sim::{generate_dataset, simulate_pair, SimConfig, SimPair};
pub use window::{PixelRect, Window};
