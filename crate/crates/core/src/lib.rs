//! Multi-resolution brain mesh networks.
//!
//! The pipeline implemented here takes region-averaged time-series, splits each
//! region signal into wavelet sub-bands, estimates a ridge-regression mesh
//! network for every window of every sub-band, compresses the flattened mesh
//! arc descriptors (MADs) with a stacked denoising autoencoder, and clusters the
//! windows with correlation-distance hierarchical clustering. Rand and adjusted
//! Rand indices score the clusters against the task layout of the session.
//!
//! Modules map onto the stages:
//!
//! - [`signal`]: sessions, region averaging, windowing, window labels
//! - [`wavelet`]: periodic orthonormal DWT and sub-band reconstruction
//! - [`mesh`]: p-nearest-neighbour selection, local ridge meshes, embeddings
//! - [`encoder`]: the stacked denoising sparse autoencoder
//! - [`clustering`]: correlation distances, agglomeration, medoids
//! - [`metrics`]: RI / ARI
//! - [`netstats`]: cross-subject precision, sparsity pruning, edge lists
//! - [`datagen`]: synthetic sessions with planted task meshes
//! - [`io`]: CSV and manifest formats shared by the stages

// `!(x >= 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod datagen;
pub mod encoder;
mod error;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod netstats;
pub mod signal;
pub mod wavelet;

pub use error::{Error, Result};
