//! Streaming anomaly detection over whole-system provenance graphs.
//!
//! The pipeline turns an edge stream into Weisfeiler-Lehman label emissions
//! ([`wl`]), folds them into an exponentially decaying histogram
//! ([`histogram`]), keeps a consistent-weighted-sampling sketch of that
//! histogram ([`sketch`]) and periodically snapshots it ([`pipeline`]).
//! Benign sketch sequences are clustered into evolutionary models
//! ([`model`]) against which new streams are checked ([`detect`]).

pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod hash;
pub mod histogram;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod simgen;
pub mod sketch;
pub mod wl;

pub use error::{Error, Result};
