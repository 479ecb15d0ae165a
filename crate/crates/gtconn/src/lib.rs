//! Simulation harness, file formats and command line for `gtconn_core`.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod runtime;
pub mod sweep;

pub use error::{AppError, AppResult};
