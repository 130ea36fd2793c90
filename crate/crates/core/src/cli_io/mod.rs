//! Command-line surface: data files, run configuration, metrics, plots.

pub mod commands;
pub mod config;
pub mod data;
pub mod metrics;
pub mod plot;
