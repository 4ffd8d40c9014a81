use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::{find_preset, DecodeMode, LambdaWeights, ModelConfig, Preset};
use crate::error::{Error, Result};

pub const SEED_ENV: &str = "GVD_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Supervision preset name, e.g. `sup-attn-cls`.
    pub preset: String,
    /// Replaces the preset's loss weights when set.
    pub lambdas: Option<LambdaWeights>,
    pub lr: f64,
    /// Learning-rate factor of the fine-tuned classifier group.
    pub fine_tune_multiplier: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Longest generated caption during validation.
    pub max_len: usize,
    pub decode: DecodeMode,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::desk(),
            preset: "sup-attn-cls".into(),
            lambdas: None,
            lr: 5e-4,
            fine_tune_multiplier: 0.1,
            lr_decay: 0.8,
            decay_every: 3,
            batch_size: 16,
            max_epochs: 40,
            seed: 123,
            max_len: 20,
            decode: DecodeMode::Greedy,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl TrainConfig {
    /// Reads a JSON config; `GVD_SEED` overrides the seed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: TrainConfig =
            serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<&'static Preset> {
        find_preset(&self.preset).ok_or_else(|| Error::Config(format!("unknown preset '{}'", self.preset)))
    }

    pub fn lambdas(&self) -> Result<LambdaWeights> {
        Ok(self.lambdas.unwrap_or(self.preset()?.lambdas))
    }

    /// Model sizes with the preset's encoder switch applied.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        m.self_attention = self.preset()?.self_attention;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.lambdas()?.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.fine_tune_multiplier > 0.0 && self.lr_decay > 0.0) {
            return bad("fine_tune_multiplier and lr_decay must be positive");
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.max_len == 0 {
            return bad("decay_every, batch_size, max_epochs and max_len must be positive");
        }
        if self.decode == DecodeMode::Beam(0) {
            return bad("beam width must be positive");
        }
        Ok(())
    }
}
