//! The single JSON document holding every tunable of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_bytes;
use crate::analysis::SvmConfig;
use crate::error::{Error, Result};
use crate::pipelines::{FitConfig, TrainConfig};
use crate::renderer::{RasterSettings, DEFAULT_NEAR, DEFAULT_TILE_SIZE};
use crate::synthdata::DatasetConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub tile_size: usize,
    pub background: [f64; 3],
    pub near: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            background: [0.0; 3],
            near: DEFAULT_NEAR,
        }
    }
}

impl RenderConfig {
    pub fn settings(&self) -> RasterSettings {
        RasterSettings {
            tile_size: self.tile_size,
            background: self.background,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub svm: SvmConfig,
    pub render: RenderConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.fit.validate()?;
        if self.render.tile_size == 0 || !(self.render.near > 0.0) {
            return Err(Error::InvalidArgument("render tile size and near plane must be positive".into()));
        }
        Ok(())
    }

    /// Overrides every seed in the document.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = seed;
        self.train.seed = seed;
        self.fit.seed = seed;
        self
    }
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let cfg: RunConfig = serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::json(path, e))?;
    cfg.validate()?;
    Ok(cfg)
}
