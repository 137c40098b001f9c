//! On-disk layout and record schemas shared by the subcommands.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use dub_core::decode::DecodeMethod;
use dub_core::dub::{Origin, ParallelPair};
use dub_core::world::MonoSentence;
use dub_core::{Matrix, Result, UnitSequence, Utterance};

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn world(&self) -> PathBuf {
        self.root.join("world.json")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.root.join("corpus").join(format!("{name}.jsonl"))
    }

    pub fn units(&self, name: &str) -> PathBuf {
        self.root.join("corpus").join(format!("{name}.units.jsonl"))
    }

    pub fn bt(&self) -> PathBuf {
        self.root.join("corpus").join("bt.jsonl")
    }

    pub fn bt_manifest(&self) -> PathBuf {
        self.root.join("corpus").join("bt.manifest.json")
    }

    pub fn codebook(&self) -> PathBuf {
        self.root.join("codebook.json")
    }

    pub fn speaker_stats(&self) -> PathBuf {
        self.root.join("speaker_stats.json")
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.json")
    }

    pub fn ckpt(&self, name: &str) -> PathBuf {
        self.root.join("ckpt").join(format!("{name}.bin"))
    }

    pub fn train_log(&self, name: &str) -> PathBuf {
        self.root.join("ckpt").join(format!("{name}.log.json"))
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }

    pub fn curve_csv(&self) -> PathBuf {
        self.root.join("curve.csv")
    }
}

/// One parallel utterance: source words, target words, speaker and frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub speaker: usize,
    pub frames: Vec<Vec<f64>>,
}

impl From<&Utterance> for UtteranceRecord {
    fn from(u: &Utterance) -> Self {
        Self {
            src: u.source_tokens.clone(),
            tgt: u.target_tokens.clone(),
            speaker: u.speaker_id,
            frames: u.frames.iter_rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl UtteranceRecord {
    pub fn into_utterance(self, frame_dim: usize) -> Result<Utterance> {
        let frames = if self.frames.is_empty() {
            Matrix::zeros(0, frame_dim)
        } else {
            Matrix::from_rows(&self.frames)?
        };
        Ok(Utterance {
            source_tokens: self.src,
            target_tokens: self.tgt,
            frames,
            speaker_id: self.speaker,
        })
    }
}

/// Target-side text only; the source side of monolingual data is never written.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonoRecord {
    pub tgt: Vec<String>,
}

impl MonoRecord {
    pub fn into_sentence(self) -> MonoSentence {
        MonoSentence {
            source_tokens: Vec::new(),
            target_tokens: self.tgt,
        }
    }
}

/// A unit/text pair; `index` locates synthetic pairs in the monolingual file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub units: UnitSequence,
    pub tgt: Vec<String>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl PairRecord {
    pub fn new(p: &ParallelPair, index: Option<usize>) -> Self {
        Self {
            units: p.units.clone(),
            tgt: p.target.clone(),
            origin: p.origin,
            index,
        }
    }

    pub fn into_pair(self) -> ParallelPair {
        ParallelPair {
            units: self.units,
            target: self.tgt,
            origin: self.origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtManifest {
    pub method: DecodeMethod,
    pub k: usize,
    pub beam_size: usize,
    pub decode_seed: u64,
    pub checkpoint: PathBuf,
    pub requested: usize,
    pub generated: usize,
    pub dropped_empty: usize,
    pub truncated: usize,
}

/// Written next to each checkpoint: stage options plus the loss curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub stage: String,
    pub pretrained_embedding: bool,
    pub bt_amount: usize,
    pub synthetic_pairs: usize,
    pub upsample_rate: usize,
    pub stream_len: usize,
    pub summary: dub_core::dub::TrainSummary,
    pub log: dub_core::model::LossLog,
}
