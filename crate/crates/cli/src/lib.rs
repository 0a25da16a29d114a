//! Experiment configuration, subcommand dispatch and report emission behind
//! the `wflab` binary.

pub mod commands;
pub mod config;
pub mod emit;
