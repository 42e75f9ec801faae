//! Command-line orchestration for the attrflow pipeline.

pub mod app;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod stages;

pub use app::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
