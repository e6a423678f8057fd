//! Library side of the `mep` command: config parsing and the `train`,
//! `verify` and `plot` subcommands.

pub mod commands;
pub mod config;

pub use commands::{cmd_plot, cmd_train, cmd_verify, git_blob_hash, parse_seeds, CommandError};
pub use config::{parse_config, render_config, ConfigError};
