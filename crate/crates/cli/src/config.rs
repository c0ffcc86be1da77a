use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Format;

/// Values loaded from `--config`. Keys are the long flag names; a flag given
/// on the command line wins over the file.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub gamma: Option<f64>,
    pub threads: Option<usize>,
    pub deterministic: Option<bool>,
    pub sample_rate: Option<u32>,
    pub zero_mean: Option<bool>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub trials: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub method: Option<String>,
    pub all: Option<bool>,
    pub epochs: Option<usize>,
    pub base: Option<f64>,
    pub n: Option<usize>,
    pub seconds: Option<f64>,
    pub lr: Option<f64>,
    pub segments: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
