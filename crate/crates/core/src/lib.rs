//! Learned-concept embeddings of trained vision models.
//!
//! Starting from per-unit concept profiles (one concept, with its IoU score, per unit
//! of a dissected layer), the crate builds a normalized model-by-concept matrix,
//! embeds it with PCA, clusters the models, relates the embedding axes to concept
//! categories and downstream performance, and measures how pairs of models
//! complement each other in a weighted soft-voting ensemble.

pub mod cluster;
pub mod correlation;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod fixture;
pub mod matrix;
pub mod pipeline;
pub mod profile;
pub mod svg;
pub mod table;

pub use error::{Error, Result};
