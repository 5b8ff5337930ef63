//! Plain-text `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use liquid_ensemble::{MechanismKind, SgdHyperparams, TrainConfig};

use crate::CliError;

/// Every key a configuration file may contain.
const KNOWN_KEYS: &[&str] = &[
    "n",
    "n_final",
    "r",
    "u",
    "mechanism",
    "mechanisms",
    "trials",
    "seed",
    "dataset",
    "datasets",
    "test_fraction",
    "final_full_fit",
    "increment_sizes",
    "delegation_rates",
    "ensemble_sizes",
    "lambda",
    "eta0",
    "tol",
    "patience",
    "max_epochs",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", no + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key `{key}`", no + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(Self {
            values,
            base_dir: PathBuf::new(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                let items = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{s}`: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if items.is_empty() {
                    return Err(CliError::Config(format!("`{key}` is empty")));
                }
                Ok(items)
            })
            .transpose()
    }

    /// Training parameters, falling back to library defaults.
    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let h = SgdHyperparams::default();
        let final_full_fit = match self.get("final_full_fit") {
            None => d.final_full_fit,
            Some(v) => parse_bool(v)
                .ok_or_else(|| CliError::Config(format!("`final_full_fit`: expected true/false, got `{v}`")))?,
        };
        let cfg = TrainConfig {
            n: self.parsed("n")?.unwrap_or(d.n),
            n_final: self.parsed("n_final")?.unwrap_or(d.n_final),
            retention: self.parsed("r")?.unwrap_or(d.retention),
            increment_size: self.parsed("u")?.unwrap_or(d.increment_size),
            mechanism: self.parsed::<MechanismKind>("mechanism")?.unwrap_or(d.mechanism),
            final_full_fit,
            seed: self.parsed("seed")?.unwrap_or(d.seed),
            hyper: SgdHyperparams {
                lambda: self.parsed("lambda")?.unwrap_or(h.lambda),
                eta0: self.parsed("eta0")?.unwrap_or(h.eta0),
                tol: self.parsed("tol")?.unwrap_or(h.tol),
                patience: self.parsed("patience")?.unwrap_or(h.patience),
                max_epochs_full_fit: self.parsed("max_epochs")?.unwrap_or(h.max_epochs_full_fit),
            },
            trace_test_accuracy: false,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn test_fraction(&self) -> Result<f64, CliError> {
        let f = self.parsed("test_fraction")?.unwrap_or(0.2);
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Config(format!("test_fraction must lie in (0, 1), got {f}")));
        }
        Ok(f)
    }

    pub fn trials(&self, default: usize) -> Result<usize, CliError> {
        let t = self.parsed("trials")?.unwrap_or(default);
        if t == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        Ok(t)
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}
