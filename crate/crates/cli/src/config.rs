use std::path::Path;

use anyhow::{Context, Result};
use magmap_core::gpr::NoisePlacement;
use serde::Deserialize;

/// Run settings read from a TOML file. Every field present here takes
/// precedence over the matching command-line flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub rate: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub takeoff_column: Option<usize>,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
    pub bref: Option<f64>,
    pub median_window: Option<usize>,
    pub max_pose_age: Option<f64>,
    pub noise_placement: Option<NoisePlacement>,
    pub spacings: Option<Vec<f64>>,
    pub strict: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Config value, else flag value, else default.
pub fn pick<T>(config: Option<T>, flag: Option<T>, default: T) -> T {
    config.or(flag).unwrap_or(default)
}
