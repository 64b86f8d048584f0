//! Bag-of-features character recognition with learned feature coding.
//!
//! The pipeline: dense SIFT-style local descriptors are extracted from
//! grayscale character images, encoded against a dictionary learned by a
//! stacked sparse auto-encoder (unsupervised pretraining plus optional
//! supervised fine-tuning), pooled into a fixed-length vector by spatial
//! pyramid max pooling, and classified with a one-vs-rest linear SVM.
//!
//! Modules follow the pipeline stages:
//!
//! - [`dataset`] — image ingestion (binary PGM trees), resizing,
//!   deterministic train/test splits, and synthetic glyph generation
//! - [`dsift`] — dense 128-d descriptor extraction and pool sampling
//! - [`sae`] — a single sparse auto-encoder layer with a KL sparsity
//!   penalty and unit-norm dictionary columns
//! - [`deepnet`] — greedy two-layer stacking, feed-forward encoding, and
//!   softmax-head fine-tuning
//! - [`pooling`] — spatial pyramid max pooling
//! - [`classify`] — linear SVM training, prediction, confusion matrices
//! - [`pipeline`] / [`config`] — end-to-end orchestration behind the CLI
//! - [`persist`] — binary artifact formats
//!
//! Every stage draws randomness from the seeded generator in [`rng`], so a
//! full run is a pure function of the dataset bytes, the configuration, and
//! one root seed.

pub mod classify;
pub mod config;
pub mod dataset;
pub mod deepnet;
pub mod dsift;
mod error;
pub mod persist;
pub mod pipeline;
pub mod pooling;
pub mod rng;
pub mod sae;

pub use error::{Error, Result};
