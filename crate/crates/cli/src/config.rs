//! Run configuration files (TOML).
//!
//! ```toml
//! [solve]
//! seed = 1
//! stage_epochs = [500, 1000, 500]
//!
//! [preprocess]
//! percentile_filter = true
//! max_resolution = 128
//!
//! [output]
//! checkpoint_every = 100
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use photostereo_core::training::SolveConfig;

use crate::error::{read_to_string, Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solve: SolveConfig,
    pub preprocess: Preprocess,
    pub output: Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    /// Drop pixels darker than `percentile` of each image from the loss.
    pub percentile_filter: bool,
    pub percentile: f64,
    /// Exponent applied to decoded values (2.2 for sRGB-like sources).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Longest image side after area downsampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_resolution: Option<usize>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            percentile_filter: false,
            percentile: 25.0,
            gamma: None,
            max_resolution: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?).map_err(|msg| Error::format(path, msg))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.solve.validate().map_err(|e| e.to_string())?;
        let p = &self.preprocess;
        if !(p.percentile >= 0.0 && p.percentile < 100.0) {
            return Err(format!("percentile {} outside [0, 100)", p.percentile));
        }
        if let Some(g) = p.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(format!("gamma {g} must be positive"));
            }
        }
        if p.max_resolution == Some(0) {
            return Err("max_resolution must be positive".into());
        }
        Ok(())
    }
}
