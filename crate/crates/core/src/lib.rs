//! Manifold-preserving EEG classification.
//!
//! The pipeline turns multichannel trials into fused SPD feature matrices
//! ([`features`]), clusters them on the SPD manifold with a curvature-aware
//! K-means ([`kmeans`]), projects each cluster onto the tangent space at its
//! centroid ([`tangent`]), and classifies with a per-cluster stacking
//! ensemble of four weak learners under a ridge meta-model ([`ensemble`]).

pub mod cli;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod kmeans;
pub mod learners;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod model_io;
pub mod rng;
pub mod tangent;

pub use error::{ErrorCategory, MpecError, Result};
pub use linalg::{SpdMatrix, SymMatrix};
