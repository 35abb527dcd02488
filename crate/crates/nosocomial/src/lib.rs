//! File formats, run configuration and subcommands of the `nosocomial` tool.
//!
//! The inference itself lives in [`nosocomial_core`]; this crate reads ward
//! records from CSV, drives chains over a worker pool and writes results.

pub mod commands;
pub mod config;
pub mod formats;
pub mod ingest;

pub use nosocomial_core as core;
