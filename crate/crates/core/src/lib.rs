//! Pooled federated learning on a hash-chained ledger.
//!
//! Clients are split into disjoint mining pools. Each round every pool
//! trains from the model on the chain tip, aggregates its clients' updates
//! with an interchangeable rule ([`aggregation`]), and competes on a shared
//! validation set under an interchangeable metric ([`metrics`]). The winning
//! candidate is sealed into the [`chain`]. [`attacks`] provides label
//! flipping, a fixed-pattern backdoor and model-replacement boosting.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! threaded execution live in the `rfc-sim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregation;
pub mod attacks;
pub mod chain;
pub mod consensus;
pub mod data;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod models;
pub mod params;
pub mod seed;

pub use error::{Error, Result};
pub use params::ParamVector;
