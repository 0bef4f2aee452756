//! Fairness-aware flood damage prediction and aid prioritization.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod model;
pub mod nn;
pub mod priority;
pub mod trainer;

pub use error::{Error, Result};
