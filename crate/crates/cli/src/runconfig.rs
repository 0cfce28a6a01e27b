//! Optional JSON configuration file. Any field present overrides the built-in
//! default; explicit command-line flags override the file in turn. Unknown
//! keys are rejected before any computation runs.

use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub p3: Option<usize>,
    pub channels: Option<usize>,
    pub heads: Option<usize>,
    pub points: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub epsilon: Option<f64>,
    pub trc_enabled: Option<bool>,
    pub lpe_fusion: Option<bool>,
    pub seed: Option<u64>,
    pub image_height: Option<usize>,
    pub image_width: Option<usize>,
    pub baseline_layers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("run config {}: {}", path.display(), e)))
    }
}
