//! Per-user cellular traffic forecasting and classification, and a TTI-level
//! DRX energy/delay simulator driven by traffic predictions.

pub mod adapt;
pub mod classifier;
pub mod drx;
pub mod error;
pub mod kv;
pub mod featurize;
pub mod linear_forecast;
pub mod neural_forecast;
pub mod report;
pub mod sim;
pub mod trace_io;

pub use error::{Error, Result};
