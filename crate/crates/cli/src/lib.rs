//! Batch front end for the two-market volatility contagion toolkit.
//!
//! The library half of the `contagion` binary:
//!
//! - layered TOML configuration with command-line overrides and a
//!   provenance hash stamped into every artifact ([`config`]),
//! - tick ingestion, including wall-clock to model-time mapping
//!   ([`ingest`]),
//! - the simulate-measure-fit replication pipeline ([`pipeline`]),
//! - the Monte Carlo study runner with grid errors and null calibration
//!   ([`study`]),
//! - subcommand bodies ([`commands`]) and the exit-code contract
//!   ([`error`]): 0 success, 2 validation, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod study;
