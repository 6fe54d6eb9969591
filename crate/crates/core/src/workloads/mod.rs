//! Workload generation, workload files and trace CSV.
//!
//! Workload files are JSON objects carrying `schema_version` alongside the
//! [`Workload`] fields:
//!
//! ```json
//! { "schema_version": 1, "n_ranks": 2, "tasks": [[...], [...]],
//!   "metadata": { "name": "...", "seed": 7 } }
//! ```

mod generate;
mod trace;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{validate_workload, ValidationError};
use crate::model::Workload;

pub use generate::{generate, GeneratorSpec, Pattern, INSTRUCTIONS_PER_SECOND};
pub use trace::{
    export_trace_from_sim, format_trace, parse_trace, read_trace, write_trace, TraceError, DEFAULT_RANKS_PER_NODE,
    TRACE_HEADER,
};

pub const WORKLOAD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorkloadFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: unsupported schema_version {found} (expected {WORKLOAD_SCHEMA_VERSION})")]
    Schema { path: String, found: u32 },
    #[error("{path}: {source}")]
    Invalid { path: String, source: ValidationError },
}

#[derive(Serialize, Deserialize)]
struct WorkloadFile<W> {
    schema_version: u32,
    #[serde(flatten)]
    workload: W,
}

pub fn workload_to_json(w: &Workload) -> String {
    let file = WorkloadFile {
        schema_version: WORKLOAD_SCHEMA_VERSION,
        workload: w,
    };
    serde_json::to_string_pretty(&file).expect("workload serializes")
}

/// Parses and validates (including deadlock freedom) a workload document.
pub fn workload_from_json(text: &str, origin: &str) -> Result<Workload, WorkloadFileError> {
    let file: WorkloadFile<Workload> = serde_json::from_str(text).map_err(|source| WorkloadFileError::Parse {
        path: origin.to_string(),
        source,
    })?;
    if file.schema_version != WORKLOAD_SCHEMA_VERSION {
        return Err(WorkloadFileError::Schema {
            path: origin.to_string(),
            found: file.schema_version,
        });
    }
    validate_workload(&file.workload).map_err(|source| WorkloadFileError::Invalid {
        path: origin.to_string(),
        source,
    })?;
    Ok(file.workload)
}

pub fn read_workload(path: impl AsRef<Path>) -> Result<Workload, WorkloadFileError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| WorkloadFileError::Io {
        path: shown.clone(),
        source,
    })?;
    workload_from_json(&text, &shown)
}

pub fn write_workload(w: &Workload, path: impl AsRef<Path>) -> Result<(), WorkloadFileError> {
    let path = path.as_ref();
    fs::write(path, workload_to_json(w) + "\n").map_err(|source| WorkloadFileError::Io {
        path: path.display().to_string(),
        source,
    })
}
