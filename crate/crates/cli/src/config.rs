//! Optional TOML config file with the same keys as the analyze flags.
//! Flags always win over file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub control_label: Option<String>,
    pub treatment_label: Option<String>,
    pub min_psms: Option<u32>,
    pub min_replicates: Option<u32>,
    pub null_samples: Option<u32>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub grid: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub no_plots: Option<bool>,
    pub corr_per_condition: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!(thermelt::Error::io(path, e)))?;
        toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config file {}: {e}", path.display()))
    }
}
