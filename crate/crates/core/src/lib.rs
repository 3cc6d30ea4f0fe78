pub mod error;
pub mod nn;

pub use error::{CdError, Result};
pub mod data;
pub mod raster;
pub mod pairs;
pub mod seeding;
pub mod networks;
pub mod checkpoint;
pub mod training;
pub mod threshold;
pub mod scoring;
pub mod config;
pub mod commands;
pub mod metrics;
pub mod synthbench;
