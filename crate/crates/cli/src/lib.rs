//! Stage orchestration behind the `praxbench` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;
