//! Command-line and HTTP front end for the steam-flood engine.
//!
//! Batch stages live in [`pipeline`]; inference on a trained model lives in
//! [`engine`] and is shared by the CLI and the [`api`] router.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod pipeline;
pub mod store;

pub use config::RunConfig;
pub use engine::Engine;
pub use error::{Result, ServiceError};
