//! File formats, configuration and the command-line pipeline around
//! `segtrack-core`.
//!
//! Streams are JSON Lines with every float written to 17 significant
//! digits; configs are TOML whose keys mirror the core config structs. All
//! output files are written atomically (temporary file, then rename).

pub mod config;
pub mod error;
pub mod json;
pub mod pipeline;
pub mod records;

pub use error::CliError;
