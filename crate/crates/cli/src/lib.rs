//! Experiment driver for the band-matrix laboratory.
//!
//! The binary exposes one subcommand per experiment; each consumes a flat
//! TOML config, runs deterministically for a given seed, and writes a
//! `report.json` manifest plus CSV tables into its output directory. All
//! runners live in [`experiments`] so integration tests can call them
//! without spawning processes.

pub mod config;
pub mod experiments;
pub mod report;
pub mod runner;

pub use experiments::{run_command, RunOptions};
