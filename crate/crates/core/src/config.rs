//! Run configuration. Every field is optional in `config.json`; missing
//! fields take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation between the two layers of the relation MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Relu,
    Gelu,
}

pub const END_TOKEN: &str = "<end>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SUMMARY_TOKEN: &str = "<sum>";
pub const INSTANCE_TOKEN: &str = "<inst>";
pub const NO_INTERACTION: &str = "none";

pub fn default_vocab() -> Vec<String> {
    [
        END_TOKEN,
        UNK_TOKEN,
        SUMMARY_TOKEN,
        INSTANCE_TOKEN,
        "a",
        "person",
        "people",
        "in",
        "the",
        "scene",
        "and",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "many",
        "another",
        "walks",
        "runs",
        "stands",
        "still",
        "north",
        "south",
        "east",
        "west",
        "follows",
        "approaches",
        "passes",
        "by",
        "talks",
        "to",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn default_labels() -> Vec<String> {
    ["follow", "approach", "pass_by", "talk_to", NO_INTERACTION]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// IoU thresholds 0.05, 0.10, ..., 0.95.
pub fn default_hota_alphas() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub relation_hidden_dim: usize,
    pub relation_dim: usize,
    pub context_dim: usize,
    pub mha_heads: usize,
    pub relation_activation: Activation,
    pub lm_dim: usize,
    pub lm_max_tokens: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub vocab: Vec<String>,
    pub labels: Vec<String>,
    pub seed: u64,
    pub iou_threshold: f64,
    pub max_age: u32,
    pub min_hits: u32,
    pub hota_alphas: Vec<f64>,
    pub match_iou: f64,
    pub learning_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feat_dim: 32,
            hidden_dim: 32,
            relation_hidden_dim: 64,
            relation_dim: 64,
            context_dim: 64,
            mha_heads: 4,
            relation_activation: Activation::Sigmoid,
            lm_dim: 32,
            lm_max_tokens: 48,
            lora_rank: 64,
            lora_alpha: 16.0,
            vocab: default_vocab(),
            labels: default_labels(),
            seed: 0,
            iou_threshold: 0.3,
            max_age: 30,
            min_hits: 3,
            hota_alphas: default_hota_alphas(),
            match_iou: 0.5,
            learning_rate: 0.05,
        }
    }
}

impl RunConfig {
    /// Small dimensions used by the bundled experiments and tests.
    pub fn small() -> Self {
        Self {
            feat_dim: 8,
            hidden_dim: 8,
            relation_hidden_dim: 16,
            relation_dim: 8,
            context_dim: 8,
            mha_heads: 2,
            lm_dim: 24,
            lora_rank: 4,
            lora_alpha: 8.0,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora_alpha / self.lora_rank as f64
    }

    pub fn token_id(&self, word: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == word)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feat_dim", self.feat_dim),
            ("hidden_dim", self.hidden_dim),
            ("relation_hidden_dim", self.relation_hidden_dim),
            ("relation_dim", self.relation_dim),
            ("context_dim", self.context_dim),
            ("mha_heads", self.mha_heads),
            ("lm_dim", self.lm_dim),
            ("lm_max_tokens", self.lm_max_tokens),
            ("lora_rank", self.lora_rank),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.context_dim.is_multiple_of(self.mha_heads) {
            return Err(Error::Config(format!(
                "context_dim {} not divisible by mha_heads {}",
                self.context_dim, self.mha_heads
            )));
        }
        if self.context_dim < 2 || self.lm_dim < 2 {
            return Err(Error::Config("layer norm needs width >= 2".into()));
        }
        if self.hota_alphas.is_empty()
            || self.hota_alphas.windows(2).any(|w| w[0] >= w[1])
            || self.hota_alphas.iter().any(|&a| !(a > 0.0 && a < 1.0))
        {
            return Err(Error::Config(
                "hota_alphas must be strictly increasing within (0,1)".into(),
            ));
        }
        for special in [END_TOKEN, UNK_TOKEN, SUMMARY_TOKEN, INSTANCE_TOKEN] {
            if self.token_id(special).is_none() {
                return Err(Error::Config(format!("vocab lacks {special}")));
            }
        }
        if !self.labels.iter().any(|l| l == NO_INTERACTION) {
            return Err(Error::Config("labels must include \"none\"".into()));
        }
        if !(self.lora_alpha.is_finite() && self.iou_threshold.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        RunConfig::small().validate().unwrap();
        assert_eq!(RunConfig::default().lora_rank, 64);
        assert_eq!(default_hota_alphas().len(), 19);
    }

    #[test]
    fn empty_json_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_json_overrides() {
        let c = RunConfig::from_json(r#"{"feat_dim": 6, "relation_activation": "relu"}"#).unwrap();
        assert_eq!(c.feat_dim, 6);
        assert_eq!(c.relation_activation, Activation::Relu);
        assert_eq!(c.hidden_dim, 32);
    }

    #[test]
    fn rejects_bad_heads() {
        let err = RunConfig::from_json(r#"{"context_dim": 10, "mha_heads": 4}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_bad_alpha_grid() {
        assert!(RunConfig::from_json(r#"{"hota_alphas": [0.5, 0.4]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"hota_alphas": [0.0, 0.4]}"#).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = RunConfig::small();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
