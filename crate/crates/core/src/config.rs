//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, split_indices, synth_dataset, Dataset, NoiseConfig, SynthConfig};
use crate::encoding::AudioPipelineConfig;
use crate::error::{Error, Result};
use crate::model::{ModalityConfig, ModelConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory; the synthetic set is generated when absent.
    pub root: Option<PathBuf>,
    pub synth: SynthConfig,
    /// `target_hw` is replaced by the model's audio input extent.
    pub audio: AudioPipelineConfig,
    pub test_ratio: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            synth: SynthConfig::default(),
            audio: AudioPipelineConfig::default(),
            test_ratio: 0.1,
            split_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn load(&self) -> Result<Dataset> {
        match &self.root {
            Some(root) => load_dataset(root),
            None => synth_dataset(&self.synth),
        }
    }

    /// `(train, test)` row indices for a dataset of `n` samples.
    pub fn split(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        split_indices(n, self.test_ratio, self.split_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub noise: Option<NoiseConfig>,
    pub data: DataConfig,
}

impl RunConfig {
    /// Small preset sized for a single CPU core: `T = 4`, `D = 64`, two
    /// blocks, batch 32, 20 epochs, 16x16 model inputs from 2 SPS stages, and
    /// 4 synthetic classes of 50 samples.
    pub fn desk() -> Self {
        let input = |channels| ModalityConfig {
            channels,
            input_hw: [16, 16],
            sps_stages: 2,
        };
        Self {
            model: ModelConfig {
                audio: input(1),
                visual: input(3),
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 20,
                batch_size: 32,
                ..TrainConfig::default()
            },
            noise: None,
            data: DataConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(self.model.sao)?;
        self.data.audio.validate()?;
        if !(self.data.test_ratio > 0.0 && self.data.test_ratio < 1.0) {
            return Err(Error::Config(format!("test_ratio must be in (0, 1), got {}", self.data.test_ratio)));
        }
        if self.data.root.is_none() && self.data.synth.classes != self.model.classes {
            return Err(Error::Config(format!(
                "synthetic data has {} classes but the model has {}",
                self.data.synth.classes, self.model.classes
            )));
        }
        Ok(())
    }
}
