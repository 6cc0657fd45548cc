//! Semi-supervised detection of low-fluidity and low-enjoyment moments in
//! multi-party videoconference recordings.
//!
//! Stages, in pipeline order:
//!
//! - [`segmentation`] cuts targeted (gap / overlap) and non-targeted clips
//!   from per-speaker audio.
//! - [`annotation`] filters unreliable annotators and binarizes ratings.
//! - [`features`] pools per-modality embeddings into fused vectors and fits
//!   standardization and PCA.
//! - [`linear`], [`ssl`] and [`pipeline`] train the SGD base classifier and
//!   its self-training / co-training wrappers.
//! - [`evaluation`] builds grouped folds, enumerates splits, scores and
//!   aggregates; [`sweep`] runs the grid; [`hpo`] tunes hyperparameters.
//! - [`synthgen`] generates ground-truth synthetic data for every stage.

pub mod annotation;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hpo;
pub mod linear;
pub mod pipeline;
pub mod report;
pub mod segmentation;
pub mod ssl;
pub mod sweep;
pub mod synthgen;

pub use error::{Error, Result};
