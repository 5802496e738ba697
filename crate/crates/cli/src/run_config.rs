//! One deserializable document that fully determines a training run, plus
//! the canonical hash that names its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use conan_core::encoder::EncoderConfig;
use conan_core::patterning::Family;
use conan_core::training::TrainConfig;

/// Pattern family named in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Alpha,
    Beta,
    Discrete,
}

impl FamilyName {
    pub fn to_family(self) -> Family {
        match self {
            FamilyName::Alpha => Family::Alpha,
            FamilyName::Beta => Family::Beta,
            FamilyName::Discrete => Family::Discrete,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyName::Alpha => "alpha",
            FamilyName::Beta => "beta",
            FamilyName::Discrete => "discrete",
        }
    }
}

impl std::fmt::Display for FamilyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Encoder architecture settings; the vocabulary size is derived from the
/// dataset, so it is not part of the config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSettings {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub internal_dropout: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let toy = EncoderConfig::toy(1);
        EncoderSettings {
            d_model: toy.d_model,
            n_layers: toy.n_layers,
            n_heads: toy.n_heads,
            d_ff: toy.d_ff,
            max_len: toy.max_len,
            internal_dropout: toy.internal_dropout,
        }
    }
}

impl EncoderSettings {
    pub fn to_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_len: self.max_len,
            internal_dropout: self.internal_dropout,
        }
    }
}

/// Optimization settings; the run seed comes from [`RunConfig::seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub pattern_batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub accum: usize,
    pub dropout: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let toy = TrainConfig::toy(0);
        TrainSettings {
            epochs: toy.epochs,
            batch_size: toy.batch_size,
            pattern_batch: toy.pattern_batch,
            lr: toy.lr,
            weight_decay: toy.weight_decay,
            accum: toy.accum,
            dropout: toy.dropout,
        }
    }
}

impl TrainSettings {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            pattern_batch: self.pattern_batch,
            lr: self.lr,
            weight_decay: self.weight_decay,
            accum: self.accum,
            dropout: self.dropout,
            seed,
        }
    }
}

/// Dataset locations. `test` is optional: training only needs train and dev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

fn default_max_vocab() -> usize {
    4096
}

fn default_lowercase() -> bool {
    true
}

/// Everything that determines a run: pattern family and shape, architecture,
/// optimization, data, and the seed. Two configs with the same canonical
/// JSON produce the same run identity (and therefore the same output
/// subdirectory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyName,
    pub n: usize,
    pub k: usize,
    /// Natural-language pattern texts, tokenized into discrete patterns.
    /// Required (non-empty) exactly when `family` is `discrete`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discrete_texts: Vec<String>,
    #[serde(default)]
    pub encoder: EncoderSettings,
    /// Named hyperparameter preset; mutually exclusive with `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSettings>,
    pub data: DataPaths,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
    #[serde(default = "default_lowercase")]
    pub lowercase: bool,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Schema-level validation, run before any compute.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            FamilyName::Discrete => {
                if self.discrete_texts.is_empty() {
                    bail!("family \"discrete\" requires non-empty discrete_texts");
                }
                if self.n != self.discrete_texts.len() {
                    bail!(
                        "n = {} disagrees with {} discrete_texts entries",
                        self.n,
                        self.discrete_texts.len()
                    );
                }
            }
            FamilyName::Alpha | FamilyName::Beta => {
                if !self.discrete_texts.is_empty() {
                    bail!("discrete_texts is only valid with family \"discrete\"");
                }
                if self.n == 0 {
                    bail!("n must be at least 1");
                }
            }
        }
        if let Some(name) = &self.preset {
            if self.train.is_some() {
                bail!("preset and train are mutually exclusive; pick one");
            }
            if TrainConfig::preset(name, 0).is_none() {
                bail!(
                    "unknown preset {:?}; available: {}",
                    name,
                    TrainConfig::preset_names().join(", ")
                );
            }
        }
        if self.max_vocab < 8 {
            bail!("max_vocab must be at least 8");
        }
        // Architecture and optimizer ranges are checked by the core
        // validators at build time; here a cheap sanity pass keeps obviously
        // broken documents from starting any I/O.
        self.encoder
            .to_config(8)
            .validate()
            .context("encoder settings")?;
        Ok(())
    }

    /// The training configuration this document selects (preset or explicit
    /// settings, defaults otherwise), carrying the run seed.
    pub fn train_config(&self) -> TrainConfig {
        if let Some(name) = &self.preset {
            TrainConfig::preset(name, self.seed).expect("validated preset name")
        } else {
            self.train.clone().unwrap_or_default().to_config(self.seed)
        }
    }

    /// Canonical JSON: serde emits struct fields in declaration order, so
    /// equal configs serialize to equal bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex digest prefix naming the run.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut id = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            id.push_str(&format!("{byte:02x}"));
        }
        id
    }

    /// Output subdirectory for this run under `out_root`.
    pub fn run_dir(&self, out_root: &Path) -> PathBuf {
        out_root.join(format!("run-{}", self.run_id()))
    }
}
