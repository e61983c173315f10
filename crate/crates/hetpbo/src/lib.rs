//! Experiment harness, file formats, and the live session service for
//! [`hetpbo_core`].
//!
//! - [`config`]: the TOML experiment configuration.
//! - [`suite`]: multi-seed runs, trace files, aggregates and `summary.json`.
//! - [`trace`], [`tables`]: CSV traces and plain-text point tables.
//! - [`stats`]: summary statistics and the paired sign test.
//! - [`service`]: the HTTP service for human-in-the-loop sessions.

pub mod config;
mod error;
pub mod service;
pub mod stats;
pub mod suite;
pub mod tables;
pub mod trace;

pub use error::{Error, Result};
