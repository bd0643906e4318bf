//! Telemetry-driven viewer engagement modeling.
//!
//! The crate covers the whole offline pipeline: parsing game telemetry and
//! viewer chat logs, turning each streamer event into a fixed-width feature
//! vector, deriving binary engagement labels from the inverse chat frequency
//! that follows each event, training a one-hidden-layer network, evaluating
//! it with match-grouped k-fold and leave-one-streamer-out splits, clustering
//! matches into play styles, and producing smoothed per-second engagement
//! lines. A deterministic synthetic generator with planted ground truth backs
//! the end-to-end tests.

pub mod dataset;
pub mod engagement_line;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod styles;
pub mod synth;

pub use error::{Error, Result};

/// Version string embedded in every artifact the toolkit writes.
pub const TOOL_VERSION: &str = concat!("engage ", env!("CARGO_PKG_VERSION"));
