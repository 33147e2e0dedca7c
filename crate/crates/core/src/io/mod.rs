//! Portable on-disk formats.

mod container;
mod dataset;
mod schedule;
mod table;
mod weights;

use std::path::{Path, PathBuf};

pub use container::{read_container, write_container, ContainerHeader, SignalContainer, SignalKind, CONTAINER_VERSION};
pub use dataset::{read_dataset, write_dataset, DatasetManifest};
pub use schedule::{format_schedule, parse_schedule, read_schedule, write_schedule};
pub use table::{parse_volumes, Table};
pub use weights::{read_weights, weights_from_json, weights_to_json, write_weights, WEIGHTS_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{found} trailing bytes after payload")]
    Trailing { found: usize },

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u64, supported: u64 },

    #[error("schedule line {line}: {reason}")]
    Schedule { line: usize, reason: String },

    #[error("weights: {0}")]
    Weights(String),

    #[error("table line {line}: {reason}")]
    Table { line: usize, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}
