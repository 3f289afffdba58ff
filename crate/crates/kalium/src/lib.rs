//! Estimation of serum potassium from ECG-derived features.
//!
//! The crate joins ECG feature records with potassium lab values, ranks the
//! features with rank-based statistics, trains first-order TSK fuzzy models
//! (grid-partitioned or fuzzy-c-means-initialized) with hybrid
//! least-squares/gradient-descent learning, and evaluates them with
//! stratified cross-validation.

pub mod anfis;
pub mod error;
pub mod eval;
pub mod fcm;
pub mod fuzzy;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};

/// Library version, for provenance records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
