#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Experiment harness for `linflow-core`: JSON run configs, CSV and SVG
//! artifacts, parallel sweeps and the verification suites behind the
//! `linflow` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod suites;
pub mod sweep;

pub use config::RunConfig;
pub use error::{AppError, ExitCode};

/// Version string recorded in every manifest.
pub const VERSION: &str = concat!("linflow ", env!("CARGO_PKG_VERSION"));
