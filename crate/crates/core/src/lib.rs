//! Removing emulated Instagram filters with an AdaIN encoder-decoder.
//!
//! The crate covers the whole pipeline: procedural filter synthesis for
//! paired datasets, the generator and critics, the training objective and
//! loop, and the evaluation metrics (SSIM, PSNR, CIEDE2000, dominant colors).

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod filters;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scenes;
pub mod train;

pub use error::{Error, Result};
pub use image::{ColorSpace, RgbImage};
