//! Experiment configuration: one TOML document describing every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::{DecodeConfig, DecodeMethod};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::vocab::NUM_SPECIALS;
use crate::world::{CorpusSizes, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub k: usize,
    pub max_iters: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { k: 32, max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    /// Total size including specials and unit symbols; `None` means
    /// specials + K + 256 text entries.
    pub size: Option<usize>,
}

#[allow(clippy::derivable_impls)]
impl Default for VocabConfig {
    fn default() -> Self {
        Self { size: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// `None` picks `max(1, round(synthetic / original))`, capped at 32.
    pub upsample_rate: Option<usize>,
    pub bt_method: DecodeConfig,
    /// Monolingual sentence counts for the scaling curve; the largest is the
    /// headline DUB model.
    pub bt_amounts: Vec<usize>,
    pub use_speaker_norm: bool,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            upsample_rate: None,
            bt_method: DecodeConfig {
                method: DecodeMethod::Sample,
                ..Default::default()
            },
            bt_amounts: vec![0, 2000, 5000, 10_000],
            use_speaker_norm: false,
        }
    }
}

impl MixtureConfig {
    pub fn max_amount(&self) -> usize {
        self.bt_amounts.iter().copied().max().unwrap_or(0)
    }
}

/// Optional side studies run after the headline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Dev-set UER of sampling, top-10 and beam-5 back-translation.
    pub uer_methods: bool,
    /// Adds a speaker-normalized pipeline row to the UER table (trains one
    /// more text-to-unit model).
    pub speaker_norm_uer: bool,
    /// Trains a full DUB model per generation method for the delta-BLEU column.
    pub method_bleu: bool,
    /// Continuous frames vs unit ids vs unit ids with centroid embeddings.
    pub embedding: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            uer_methods: true,
            speaker_norm_uer: false,
            method_bleu: false,
            embedding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream; sub-config seed fields are ignored by the
    /// pipeline in favor of streams derived from this value.
    pub seed: u64,
    /// Not part of the configuration hash.
    pub output_dir: Option<PathBuf>,
    pub world: WorldConfig,
    pub corpus: CorpusSizes,
    pub quantizer: QuantizerConfig,
    pub vocab: VocabConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mixture: MixtureConfig,
    pub eval_decode: DecodeConfig,
    pub studies: StudyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: None,
            world: WorldConfig::default(),
            corpus: CorpusSizes::default(),
            quantizer: QuantizerConfig::default(),
            vocab: VocabConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            mixture: MixtureConfig::default(),
            eval_decode: DecodeConfig::beam(5),
            studies: StudyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.quantizer.k == 0 {
            return Err(Error::Config("quantizer: k must be positive".into()));
        }
        if self.quantizer.max_iters == 0 {
            return Err(Error::Config("quantizer: max_iters must be positive".into()));
        }
        if self.corpus.train == 0 || self.corpus.dev == 0 || self.corpus.test == 0 {
            return Err(Error::Config("corpus: train, dev and test must be nonempty".into()));
        }
        if self.mixture.upsample_rate == Some(0) {
            return Err(Error::Config("mixture: upsample_rate must be at least 1".into()));
        }
        if self.mixture.bt_amounts.is_empty() {
            return Err(Error::Config("mixture: bt_amounts must not be empty".into()));
        }
        if self.mixture.max_amount() > self.corpus.mono {
            return Err(Error::Config(format!(
                "mixture: bt amount {} exceeds the {} monolingual sentences",
                self.mixture.max_amount(),
                self.corpus.mono
            )));
        }
        let size = self.vocab_size();
        if size < NUM_SPECIALS + self.quantizer.k {
            return Err(Error::Config(format!("vocab: size {size} cannot hold the unit symbols")));
        }
        self.mixture.bt_method.validate(size)?;
        self.eval_decode.validate(size)?;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size.unwrap_or(NUM_SPECIALS + self.quantizer.k + 256)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The configuration as echoed in artifacts: output location removed.
    pub fn canonical(&self) -> Self {
        Self {
            output_dir: None,
            ..self.clone()
        }
    }

    /// Hex SHA-256 prefix of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.canonical()).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
