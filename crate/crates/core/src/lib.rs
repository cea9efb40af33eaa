//! User identity linkage across platforms with asymmetric information:
//! one platform exposes timestamped text posts, the other geo-location
//! check-ins. Accounts are matched by building a word-location correlation
//! matrix from labeled links, expanding each candidate pair into an
//! interactive tensor (correlation channel + time-gap channel), and scoring
//! the tensor with a small 3D convolutional network.
//!
//! Pipeline stages map onto the top-level modules:
//!
//! - [`corpus`]: record types, JSONL ingestion, preprocessing, negative
//!   sampling, train/valid/test splitting, and a synthetic generator.
//! - [`correlation`]: co-occurrence counting and the tf-idf style
//!   word-location matrix.
//! - [`tensor`]: per-pair interactive tensor construction.
//! - [`network`]: conv3d + dynamic pooling + MLP classifier with
//!   hand-written backward passes.
//! - [`trainer`]: mini-batch optimization, model selection, checkpoints.
//! - [`metrics`]: F1 / accuracy / rank-based AUC and the label-ratio sweep.
//! - [`pipeline`]: file-level orchestration shared by the CLI and bindings.

pub mod config;
pub mod corpus;
pub mod correlation;
pub mod error;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod tensor;
pub mod trainer;

mod binio;

pub use error::{Error, Result};
