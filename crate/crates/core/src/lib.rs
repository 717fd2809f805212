//! Vendi-Score gated latent sequence model with masked training, ancestral
//! sampling, decoding, imputation and forecasting.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod generation;
pub mod model;
pub mod ndmath;
pub mod network;
pub mod training;
pub mod vendi;

pub use error::{Error, Result};
