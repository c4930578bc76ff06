//! Command implementations and run configuration for the `veriloop` binary.

pub mod commands;
pub mod config;
