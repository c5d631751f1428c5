//! Datasets, experiment specs, checkpoints and CSV output.

pub mod checkpoint;
pub mod config;
pub mod idx;
pub mod synthetic;
pub mod table;

use std::path::Path;

use crate::error::{Error, Result};
use crate::lottery::ExperimentRecord;

pub fn save_record(record: &ExperimentRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Format(format!("record not serializable: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_record(path: impl AsRef<Path>) -> Result<ExperimentRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: not an experiment record: {e}", path.display())))
}
