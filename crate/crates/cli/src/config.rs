use std::path::{Path, PathBuf};

use serde::Deserialize;
use signcong::calibration::CalibrationConfig;

use crate::CliError;

pub const CONFIG_ENV: &str = "SIGNCONG_CONFIG";

/// Contents of the optional TOML config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub calibration: CalibrationConfig,
}

/// `--config` wins over `$SIGNCONG_CONFIG`; with neither, built-in defaults.
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

pub fn load(flag: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = config_path(flag) else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
}
