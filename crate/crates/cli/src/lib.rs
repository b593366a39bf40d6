//! Command implementations behind the `cpuzzle` binary: corpus generation,
//! solving, evaluation, rendering and batch runs.

pub mod commands;
pub mod config;
pub mod error;
pub mod render;

pub use commands::{cmd_batch, cmd_eval, cmd_generate, cmd_render, cmd_solve};
pub use config::RunConfig;
pub use error::{CliError, Result};
