//! Report envelopes. The timestamp lives in its own `metadata` block so the
//! rest of a report is byte-identical across identical runs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, RunConfig};

pub fn envelope<T: Serialize>(command: &str, config: Option<&RunConfig>, result: &T) -> Result<Value, CliError> {
    let result = serde_json::to_value(result).map_err(|e| CliError::Usage(e.to_string()))?;
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(json!({
        "command": command,
        "config_hash": config.map(|c| c.hash()),
        "config": config.map(|c| serde_json::to_value(c).expect("config serializes")),
        "result": result,
        "metadata": {
            "generated_unix": generated,
            "tool_version": env!("CARGO_PKG_VERSION"),
        },
    }))
}

/// Write `value` as pretty JSON to `dir/name`, creating `dir`.
pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Canonical JSON echo of the configuration, written beside every report.
pub fn write_config_echo(dir: &Path, config: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("config_{}.json", config.hash()));
    std::fs::write(&path, config.canonical_json() + "\n")?;
    Ok(path)
}
