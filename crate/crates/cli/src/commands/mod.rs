//! Subcommand implementations.

pub mod pretrain;
pub mod report;
pub mod simulate;
pub mod track;
pub mod train;
pub mod tune;

use std::path::Path;

use advo_core::frontend::FrontendParams;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Reads parameters from either a bare parameter object or a file with a
/// `params` field, such as the output of `tune-pso`.
pub fn read_params(path: &Path) -> CliResult<FrontendParams> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read parameters {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let inner = value.get("params").cloned().unwrap_or(value);
    let params: FrontendParams =
        serde_json::from_value(inner).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    params.validate()?;
    Ok(params)
}
