//! Configuration-driven front end for the stochastic inversion pipeline.

pub mod commands;
pub mod config;
pub mod tables;

pub use config::ExperimentConfig;
