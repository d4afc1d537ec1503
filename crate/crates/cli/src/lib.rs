//! Library surface of the CLI: command implementations, configuration
//! parsing, fit reports, and the benchmark-only K-means baseline.

pub mod commands;
pub mod config;
pub mod kmeans;
pub mod report;
