//! Intensity harmonization for overlapping LiDAR scans.

pub mod baselines;
mod codec;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod pointcloud;
pub mod response;
pub mod synth;

pub use error::{Error, Result};
