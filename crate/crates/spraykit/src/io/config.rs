//! TOML configuration for dataset generation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene::{CalibrationPool, SceneKind, SceneSpec};

use super::IoError;

/// Top-level generation config. The `[scene]` table is a full [`SceneSpec`];
/// its seed acts as the dataset master seed unless overridden on the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    /// number of images to generate
    pub count: usize,
    #[serde(default)]
    pub scene: SceneSpec,
    /// calibration pool; required for droplet scenes
    #[serde(default)]
    pub pool: Option<CalibrationPool>,
}

impl GenerateConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let config: GenerateConfig = toml::from_str(&text).map_err(|e| IoError::Config {
            path: path.display().to_string(),
            // toml errors carry line/column spans in their display form
            message: e.to_string(),
        })?;
        config.validate(path)?;
        Ok(config)
    }

    fn validate(&self, path: &Path) -> Result<(), IoError> {
        let cfg_err = |message: String| IoError::Config {
            path: path.display().to_string(),
            message,
        };
        if self.count == 0 {
            return Err(cfg_err("count must be >= 1".into()));
        }
        self.scene
            .validate()
            .map_err(|e| cfg_err(e.to_string()))?;
        match (&self.scene.kind, &self.pool) {
            (SceneKind::Droplets, None) => {
                Err(cfg_err("scene.kind = \"droplets\" requires a [pool] table".into()))
            }
            (_, Some(pool)) => {
                pool.validate().map_err(|e| cfg_err(e.to_string()))?;
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
