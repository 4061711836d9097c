//! Command-line front end for the `cdma-lsa` experiments: configuration
//! handling, the five reproduction commands and their CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, run, Command, Failure, Report};
pub use config::RunConfig;
