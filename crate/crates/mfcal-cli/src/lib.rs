//! Command-line front end for the multi-fidelity calibration library.
//!
//! The pipeline stages live in [`commands`]; [`config`] parses the
//! `key = value` run configuration, [`data`] reads and writes CSV
//! datasets, and [`report`] renders the JSON and CSV artifacts. The
//! binary in `main.rs` is a thin argument-parsing shell over these
//! modules so everything here stays directly testable.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use error::{CliError, Result};
