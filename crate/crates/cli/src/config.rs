use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// Settings that may come from a JSON file given with `--config`. Keys
/// mirror the long flag names; flags given on the command line win.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub response_col: Option<String>,
    pub estimator: Option<String>,
    pub lambda: Option<f64>,
    pub iota: Option<f64>,
    pub gamma: Option<f64>,
    pub folds: Option<usize>,
    pub no_intercept: Option<bool>,
    pub no_standardize: Option<bool>,
    pub scenario: Option<u32>,
    pub errors: Option<String>,
    pub contaminate: Option<bool>,
    pub y0_grid: Option<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
    pub allow_nonconverged: Option<bool>,
    pub b: Option<f64>,
    pub efficiency: Option<f64>,
    pub sigma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}
