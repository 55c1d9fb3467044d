use std::fs;
use std::path::{Path, PathBuf};

use lfc_core::landmark::PartitionScheme;
use lfc_core::net::{HeadVariant, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;

/// Contents of the `--config` TOML file. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|message| CliError::Config { path: path.to_path_buf(), message })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// Flags that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub head: Option<HeadVariant>,
    pub scheme: Option<PartitionScheme>,
    pub epochs: Option<usize>,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub dataset: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(
        file: Option<&Path>,
        overrides: &Overrides,
        output_dir: PathBuf,
        dataset: Option<PathBuf>,
    ) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(h) = overrides.head {
            cfg.model.head = h;
        }
        if let Some(s) = overrides.scheme {
            cfg.model.scheme = s;
        }
        if let Some(e) = overrides.epochs {
            cfg.train.epochs = e;
        }
        let seed = overrides.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
        cfg.model
            .validate(lfc_core::synthground::IMAGE_SIZE)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        fs::create_dir_all(&output_dir).map_err(|e| CliError::io(&output_dir, e))?;
        Ok(RunConfig { seed, model: cfg.model, train: cfg.train, output_dir, dataset })
    }

    /// The file form of this configuration, seed included.
    pub fn to_file(&self) -> FileConfig {
        FileConfig { seed: Some(self.seed), model: self.model.clone(), train: self.train.clone() }
    }
}
