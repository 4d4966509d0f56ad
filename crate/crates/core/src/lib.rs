//! Synthetic segmentation data for fish in underwater imagery.
//!
//! Fish cut-outs are placed with a random similarity transform, bent with a
//! thin plate spline, colour-matched to their surroundings by histogram
//! matching and alpha-composited into a background. Every sampled value is
//! recorded so that a run can be regenerated byte for byte.

pub mod affine;
pub mod cli;
pub mod compositor;
pub mod config;
pub mod error;
pub mod generator;
pub mod histmatch;
pub mod io;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod rng;
mod sample;
pub mod tps;

pub use affine::{apply_affine, compose_affine, sample_affine_params, AffineMatrix, AffineParams};
pub use compositor::{paste, Canvas};
pub use config::{FishCountDistribution, GenConfig, Stage};
pub use error::{Error, Result};
pub use generator::{
    generate_dataset, generate_stage1_example, generate_stage2_example, replay_example, Example,
};
pub use histmatch::{match_histogram, stage1_reference, stage2_reference, HistogramSpec, PixelSample};
pub use manifest::Manifest;
pub use metrics::{best_dice_threshold, binarize, dice, iou, pr_sweep, PrPoint};
pub use raster::{BinaryMask, FishAsset, RasterImage, Rect, SoftMask};
pub use rng::{Rng, RngState};
pub use tps::{eval_tps, sample_tps, solve_tps, warp_asset, ControlPointSet, TpsWarp};
