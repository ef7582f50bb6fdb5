//! Command-line front end for `rfc-core`.
//!
//! Adds what the `no_std` core leaves out: TOML run configurations and
//! scenario presets, CSV datasets, a rayon-backed [`Executor`], and the
//! output formats of a run (records, chain export, summary, models).
//!
//! [`Executor`]: rfc_core::exec::Executor

pub mod config;
pub mod csvdata;
pub mod error;
pub mod export;
pub mod parallel;
pub mod presets;
pub mod runner;

pub use error::{Result, SimError};
pub use rfc_core;
