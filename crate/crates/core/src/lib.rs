//! Federated incremental-learning drift simulator for network intrusion detection.
//!
//! The crate is organised along the experiment pipeline:
//!
//! - [`nn`]: a small stacked-LSTM classifier with hand-written backpropagation.
//! - [`data`]: flow-record ingestion, cleaning, stratified splitting, min-max scaling
//!   and label encoding.
//! - [`timeline`]: drift schedule, temporal segmentation, class capping, IID client
//!   partitioning and per-strategy training-set composition.
//! - [`fed`]: FedAvg rounds, checkpoint chaining and parameter-averaging initialisation.
//! - [`eval`]: confusion-matrix metrics, cross-period evaluation and latency accounting.
//! - [`synth`]: deterministic synthetic flow datasets with controllable divergence.
//! - [`runner`]: run configuration, validation and end-to-end experiment orchestration.

pub mod data;
pub mod error;
pub mod eval;
pub mod fed;
pub mod matrix;
pub mod nn;
pub mod runner;
pub mod seed;
pub mod synth;
pub mod timeline;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use seed::Seed;
