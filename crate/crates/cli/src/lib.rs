//! Library half of the `dac` binary: config handling and the subcommands.

pub mod commands;
pub mod config;
