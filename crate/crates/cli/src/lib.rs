//! Command implementations behind the `tlps` binary.

pub mod commands;
pub mod config;
pub mod error;
