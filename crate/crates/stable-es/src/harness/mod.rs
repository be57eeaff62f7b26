//! Run management: configuration, training/evaluation commands, and
//! plot-ready table emission.

pub mod commands;
pub mod config;

pub use commands::*;
pub use config::*;
