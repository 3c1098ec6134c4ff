//! Learning a black-box classifier's per-category false-alarm and miss rates
//! from its own noisy outputs, and using them to correct those outputs.
//!
//! The pieces:
//! - [`model`]: domain types, priors, the percept generative model and its likelihood;
//! - [`inference`]: the particle filter with MH rejuvenation and retrospective MAP;
//! - [`baselines`]: thresholding and the lesioned (fixed-rate) model;
//! - [`dataset`]: synthetic benchmark generation and file formats;
//! - [`metrics`]: estimate error, accuracy, noise, and accuracy-by-noise curves.

pub mod baselines;
pub mod dataset;
pub mod distributions;
mod error;
pub mod evaluate;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod seeds;

pub use error::{Error, Result};
