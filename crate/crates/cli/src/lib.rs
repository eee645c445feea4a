//! Experiment orchestration for the white-noise studies: configuration,
//! the two simulation experiments, contraction-rate sweeps, CSV/JSON
//! persistence and SVG figure rendering.

pub mod config;
pub mod contract;
pub mod experiments;
pub mod output;
pub mod report;
pub mod svg;

pub use config::*;
