//! Optional TOML config file and the worker-count environment variable.
//!
//! ```toml
//! [fit]
//! measure = "ped"
//! trees = 30
//! rand_pct = 10.0
//!
//! [crossval]
//! folds = 10
//! runs = 30
//!
//! [features]
//! histogram_bins = 64
//!
//! [synth]
//! noise = 0.02
//! ```

use std::path::Path;

use anyhow::Context;
use illumtree::features::FeatureConfig;
use illumtree::synth::SynthConfig;
use serde::Deserialize;

pub const THREADS_VAR: &str = "AWB_THREADS";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitFile {
    pub measure: Option<String>,
    pub trees: Option<usize>,
    pub rand_pct: Option<f64>,
    pub threshold: Option<f64>,
    pub min_parent: Option<usize>,
    pub min_leaf: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalFile {
    pub folds: Option<usize>,
    pub runs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub fit: FitFile,
    pub crossval: CrossvalFile,
    pub features: FeatureConfig,
    pub synth: SynthConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Sizes the global worker pool from `AWB_THREADS` (unset or 0 = automatic).
pub fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_VAR} must be a non-negative integer, got `{value}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}
