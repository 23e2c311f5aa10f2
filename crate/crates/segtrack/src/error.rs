use std::io;
use std::path::{Path, PathBuf};

use segtrack_core::affinity::AffinityError;
use segtrack_core::embedding::EmbeddingError;
use segtrack_core::mask::MaskError;
use segtrack_core::metrics::MetricsError;
use segtrack_core::simulator::SimulationError;
use segtrack_core::tracker::TrackerError;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    /// Bad config file or value; `key` names the offending key when known.
    #[error("config{}: {message}", key.as_deref().map(|k| format!(" key `{k}`")).unwrap_or_default())]
    Config { path: Option<PathBuf>, line: Option<usize>, key: Option<String>, message: String },
    /// Well-formed JSON that violates a record invariant.
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("encoding failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config { .. } => "config",
            CliError::Record { .. } => "record",
            CliError::Usage(_) => "usage",
            CliError::Encode(_) => "encode",
            CliError::Mask(_) => "mask",
            CliError::Embedding(_) => "embedding",
            CliError::Affinity(_) => "affinity",
            CliError::Tracker(_) => "tracker",
            CliError::Metrics(_) => "metrics",
            CliError::Simulation(_) => "simulation",
        }
    }

    /// Exit status: 2 for usage and input problems, 1 for failures while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Config { .. } | CliError::Record { .. } => 2,
            _ => 1,
        }
    }

    /// The `{"error": {...}}` object printed on stderr.
    pub fn to_json(&self) -> Value {
        let mut obj = json!({ "kind": self.kind(), "message": self.to_string() });
        let map = obj.as_object_mut().expect("object literal");
        match self {
            CliError::Io { path, .. } => {
                map.insert("path".into(), json!(path));
            }
            CliError::Parse { path, line, .. } | CliError::Record { path, line, .. } => {
                map.insert("path".into(), json!(path));
                map.insert("line".into(), json!(line));
            }
            CliError::Config { path, line, key, .. } => {
                if let Some(p) = path {
                    map.insert("path".into(), json!(p));
                }
                if let Some(l) = line {
                    map.insert("line".into(), json!(l));
                }
                if let Some(k) = key {
                    map.insert("key".into(), json!(k));
                }
            }
            _ => {}
        }
        json!({ "error": obj })
    }
}
