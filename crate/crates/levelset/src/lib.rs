//! Configuration, file formats and subcommands for `levelset-core`.
//!
//! The `levelset` binary is a thin wrapper over [`commands`]; everything it
//! does is also callable from Rust.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod problem;

pub use config::CliConfig;
pub use error::{Error, Result};
