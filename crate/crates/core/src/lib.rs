//! Sub-national crop yield forecasting: feature construction, model zoo,
//! nested leave-one-year-out hindcasts, significance testing and explanations.

pub mod bridge;
pub mod data;
pub mod error;
pub mod explain;
pub mod features;
pub mod harness;
pub mod models;
pub mod reduce;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
