//! Command implementations behind the `liquid-ensemble` binary.

pub mod commands;
pub mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};

/// Environment variable naming the dataset directory.
pub const DATA_DIR_ENV: &str = "LIQUID_ENSEMBLE_DATA";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or missing input; exit code 2.
    Config(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<liquid_ensemble::Error> for CliError {
    fn from(e: liquid_ensemble::Error) -> Self {
        match e {
            liquid_ensemble::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Directory searched for named datasets: `$LIQUID_ENSEMBLE_DATA`, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Resolves a dataset reference: a bare name is looked up as `<name>.csv`
/// in `data_dir`; anything with a path separator or `.csv` suffix is a path,
/// tried as given and then relative to `config_dir`.
pub fn resolve_dataset(reference: &str, data_dir: &Path, config_dir: &Path) -> Result<PathBuf, CliError> {
    let is_path = reference.contains(['/', '\\']) || reference.ends_with(".csv");
    let candidates = if is_path {
        let p = PathBuf::from(reference);
        if p.is_absolute() {
            vec![p]
        } else {
            vec![p.clone(), config_dir.join(p)]
        }
    } else {
        vec![data_dir.join(format!("{reference}.csv"))]
    };
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| CliError::Config(format!("dataset not found: {}", candidates[0].display())))
}

/// Loads a dataset and its `.schema` sidecar.
pub fn load(path: &Path) -> Result<liquid_ensemble::Dataset, CliError> {
    let schema = liquid_ensemble::data::schema_path(path);
    if !schema.is_file() {
        return Err(CliError::Config(format!("schema sidecar not found: {}", schema.display())));
    }
    liquid_ensemble::data::load_dataset(path).map_err(|e| CliError::Runtime(e.to_string()))
}
