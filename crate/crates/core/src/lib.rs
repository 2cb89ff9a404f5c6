//! Steam-flood production forecasting and steam allocation.
//!
//! Raw well records are consolidated and imputed ([`ingest`]), turned into
//! leakage-safe lag features ([`features`]), fit with a second-order gradient
//! boosted tree ensemble ([`gbt`]), scored against a copy-forward baseline
//! ([`eval`]) and searched for the best split of a fixed daily steam budget
//! ([`optimize`]). [`synthfield`] generates a seeded pad with a known
//! production function for testing.

pub mod eval;
pub mod features;
pub mod gbt;
pub mod ingest;
pub mod matrix;
pub mod optimize;
pub mod synthfield;
pub mod workflow;

pub use matrix::DenseMatrix;
