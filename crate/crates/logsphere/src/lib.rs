//! Per-message anomaly localization for evolving software logs.
//!
//! The library is organized as a pipeline: [`corpus`] loads sessions of raw
//! log messages, [`embed`] turns each message into a dense rich
//! representation, [`reduce`] compresses those with PCA and groups them with
//! density-based clustering into abstract representations, and
//! [`discriminator`] learns a hypersphere of normality over both feature
//! levels and scores individual logs against a calibrated threshold.
//! [`synevol`] injects synthetic logging evolution into a corpus, [`baseline`]
//! provides a directed-graph reference model for comparison, and [`eval`]
//! computes per-log precision/recall/F1 and runs experiment grids.

pub mod baseline;
pub mod bundle;
pub mod config;
pub mod corpus;
pub mod discriminator;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod hdbscan;
pub mod pipeline;
pub mod reduce;
pub mod synevol;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
