//! Forecasting UPDRS scores from longitudinal proteomic and clinical data.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gradsuite;
pub mod kan;
pub mod models;
pub mod nncore;
pub mod pipeline;
pub mod preprocess;
pub mod traineval;

pub use error::{Error, ErrorCategory, Result};
