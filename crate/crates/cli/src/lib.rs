//! Configuration, data files, plots and subcommands of the `sigsel` tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod plot;
pub mod presets;

pub use config::{load, ExperimentConfig};
