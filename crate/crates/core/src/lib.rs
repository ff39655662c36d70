//! Analysis toolkit for news consumption on social platforms.
//!
//! The pipeline runs from raw interaction logs ([`ingest`]) to bipartite
//! graphs and their projections ([`graph`]), community detection
//! ([`community`]), heavy-tail fits ([`stats`]), selective-exposure curves
//! ([`exposure`]) and the per-user localization metric ([`polarization`]).
//! [`simulation`] hosts the trust-modified bounded confidence model.

pub mod cli;
pub mod community;
pub mod error;
pub mod exposure;
pub mod graph;
pub mod ingest;
pub mod polarization;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
