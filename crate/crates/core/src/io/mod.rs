//! Versioned on-disk formats: network and sensor-layout documents, scenario
//! batches, measurement tables, state snapshots and report files.
//!
//! Every JSON document carries `format` and `version` header fields; the
//! measurement CSV carries a version comment line. Writers go through
//! [`atomic_write`] (temp file + rename), so readers never observe partial
//! files.

pub mod layout_file;
pub mod measurements;
pub mod network_file;
pub mod report;
pub mod scenario_file;
pub mod state_file;

use std::path::Path;

use crate::error::{Error, Result};

pub use layout_file::{load_layout, save_layout};
pub use measurements::{read_measurements, write_measurements};
pub use network_file::{load_network, save_network, LoadedNetwork};
pub use scenario_file::{load_scenario_batch, save_scenario_batch, ScenarioBatch};
pub use state_file::{load_state, save_state};

/// Writes via a temporary sibling file and an atomic rename.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(parent)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("not a file path: {}", path.display())))?;
    let mut tmp = parent.to_path_buf();
    tmp.push(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes as pretty JSON with a trailing newline and writes atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Reads and deserializes JSON, naming the file in errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::format(format!("{}:{}: {e}", path.display(), e.line()))
    })
}

pub(crate) fn check_header(
    path: &Path,
    format: &str,
    version: u32,
    expected_format: &str,
    expected_version: u32,
) -> Result<()> {
    if format != expected_format {
        return Err(Error::format(format!(
            "{}: format is {format:?}, expected {expected_format:?}",
            path.display()
        )));
    }
    if version != expected_version {
        return Err(Error::format(format!(
            "{}: unsupported version {version} (expected {expected_version})",
            path.display()
        )));
    }
    Ok(())
}
