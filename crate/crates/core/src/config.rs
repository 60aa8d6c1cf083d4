//! Pipeline configuration and its key-value file form.
//!
//! The file is TOML; every key is optional and missing keys take the default
//! algorithm parameters (5x5 fitting window, 50% inliers, radii 0..=100 in
//! steps of 10, 5 ms temporal limit).
//!
//! ```toml
//! polarity_mode = "separate"
//! horizons = [250000]
//! cluster_span = 50000
//!
//! [edl]
//! t_past = 5000
//!
//! [scales]
//! radii = [0, 10, 20, 30]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arms::ScaleSet;
use crate::edl::{ConfigError, EdlConfig};
use crate::event::{Micros, PolarityMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolaritySetting {
    #[default]
    Separate,
    Merged,
}

impl From<PolaritySetting> for PolarityMode {
    fn from(p: PolaritySetting) -> Self {
        match p {
            PolaritySetting::Separate => PolarityMode::Separate,
            PolaritySetting::Merged => PolarityMode::Merged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub edl: EdlConfig,
    pub scales: ScaleSet,
    /// Prediction horizons in µs.
    pub horizons: Vec<Micros>,
    /// Cluster window span in µs for speed normalization and affine evaluation.
    pub cluster_span: Micros,
    pub polarity_mode: PolaritySetting,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            edl: EdlConfig::default(),
            scales: ScaleSet::default(),
            horizons: Vec::new(),
            cluster_span: 50_000,
            polarity_mode: PolaritySetting::Separate,
            input: None,
            output: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.edl.validate()?;
        self.scales.validate()?;
        if self.cluster_span == 0 {
            return Err(ConfigError::OutOfRange {
                field: "cluster_span",
                value: 0.0,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigFileError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
