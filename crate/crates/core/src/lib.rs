//! Deterministic simulator for asynchronous federated learning.
//!
//! The crate is split by concern:
//!
//! - [`tensor`]: parameter arithmetic (deltas, per-layer projection, moving average)
//! - [`models`]: tiny classifiers with analytic gradients and local SGD
//! - [`data`]: synthetic blobs, Dirichlet partitioning, IDX ingestion
//! - [`delays`]: client latency models and trace loading
//! - [`strategies`]: server aggregation rules, asynchronous and synchronous
//! - [`engine`]: the discrete-event loop and metrics
//! - [`report`]: multi-seed summaries and time-to-target comparisons
//! - [`presets`]: the desk-scale scenarios behind the acceptance suite

pub mod data;
pub mod delays;
pub mod engine;
pub mod error;
pub mod models;
pub mod presets;
pub mod report;
pub mod rng;
pub mod strategies;
pub mod tensor;

pub use error::{Error, Result};
