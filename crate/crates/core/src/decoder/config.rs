use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::CLASSIFIER_DROPOUT;

/// How token losses of one sentence are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceAveraging {
    /// Mean over the sentence's tokens.
    #[default]
    PerToken,
    /// Sum over the sentence's tokens.
    PerSentence,
}

/// Architecture sizes and switches. The class count and vocabulary size come
/// from the class set and vocabulary the model is built with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Region feature size d.
    pub feature_dim: usize,
    /// Frame feature size d_t.
    pub temporal_dim: usize,
    /// Word embedding size e.
    pub embed_dim: usize,
    /// Hidden and encoding width m.
    pub hidden_dim: usize,
    /// Location embedding size d_s.
    pub location_dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub ffn_dim: usize,
    pub self_attention: bool,
    pub encoding_relu: bool,
    /// Dropout after the encoding ReLU.
    pub dropout: f64,
    /// Dropout after the classifier ReLU.
    pub classifier_dropout: f64,
    #[serde(default)]
    pub sentence_averaging: SentenceAveraging,
}

impl ModelConfig {
    /// Small CPU-friendly sizes.
    pub fn desk() -> Self {
        ModelConfig {
            feature_dim: 64,
            temporal_dim: 32,
            embed_dim: 16,
            hidden_dim: 32,
            location_dim: 16,
            heads: 4,
            encoder_layers: 2,
            ffn_dim: 64,
            self_attention: true,
            encoding_relu: true,
            dropout: 0.1,
            classifier_dropout: CLASSIFIER_DROPOUT,
            sentence_averaging: SentenceAveraging::PerToken,
        }
    }

    /// Sizes for detector features of the original scale.
    pub fn paper() -> Self {
        ModelConfig {
            feature_dim: 2048,
            temporal_dim: 3072,
            embed_dim: 512,
            hidden_dim: 1024,
            location_dim: 300,
            heads: 8,
            encoder_layers: 2,
            ffn_dim: 2048,
            self_attention: true,
            encoding_relu: true,
            dropout: 0.1,
            classifier_dropout: CLASSIFIER_DROPOUT,
            sentence_averaging: SentenceAveraging::PerToken,
        }
    }

    /// The gradient-check instance.
    pub fn tiny() -> Self {
        ModelConfig {
            feature_dim: 8,
            temporal_dim: 6,
            embed_dim: 8,
            hidden_dim: 16,
            location_dim: 8,
            heads: 4,
            encoder_layers: 2,
            ffn_dim: 32,
            self_attention: true,
            encoding_relu: true,
            dropout: 0.1,
            classifier_dropout: CLASSIFIER_DROPOUT,
            sentence_averaging: SentenceAveraging::PerToken,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper" => Some(Self::paper()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.feature_dim,
            self.temporal_dim,
            self.embed_dim,
            self.hidden_dim,
            self.location_dim,
            self.ffn_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Config(format!("hidden width {} must be even", self.hidden_dim)));
        }
        for (name, p) in [("dropout", self.dropout), ("classifier_dropout", self.classifier_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}
