//! TOML configuration files. Keys mirror the field names of the core config
//! structs one to one; nested structs are TOML tables.

use std::fs;
use std::path::Path;

use segtrack_core::tracker::{ConfigError, TrackerConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

/// Dotted key on the line holding byte `offset`, qualified by the nearest
/// preceding `[table]` header.
fn key_at(text: &str, offset: usize) -> (usize, Option<String>) {
    let line_no = text[..offset.min(text.len())].matches('\n').count();
    let mut table = None;
    for l in text.lines().take(line_no) {
        let t = l.trim();
        if t.starts_with('[') && t.ends_with(']') {
            table = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        }
    }
    let key = text.lines().nth(line_no).and_then(|l| l.split_once('=')).map(|(k, _)| k.trim().trim_matches('"').to_string());
    let key = key.filter(|k| !k.is_empty()).map(|k| match &table {
        Some(t) => format!("{t}.{k}"),
        None => k,
    });
    (line_no + 1, key)
}

pub fn parse_toml<T: DeserializeOwned>(text: &str, path: Option<&Path>) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| {
        let (line, key) = match e.span() {
            Some(span) => {
                let (line, key) = key_at(text, span.start);
                (Some(line), key)
            }
            None => (None, None),
        };
        CliError::Config { path: path.map(Path::to_path_buf), line, key, message: e.message().to_string() }
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_toml(&text, Some(path))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Encode(e.to_string()))
}

pub fn config_error(e: ConfigError, path: Option<&Path>) -> CliError {
    CliError::Config {
        path: path.map(Path::to_path_buf),
        line: None,
        key: Some(e.key.to_string()),
        message: e.to_string(),
    }
}

/// Reads and validates a tracker config; `None` gives the defaults.
pub fn load_tracker_config(path: Option<&Path>) -> Result<TrackerConfig, CliError> {
    let cfg = match path {
        Some(p) => load_toml(p)?,
        None => TrackerConfig::default(),
    };
    cfg.validate().map_err(|e| config_error(e, path))?;
    Ok(cfg)
}
