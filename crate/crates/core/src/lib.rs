//! Unit-to-text translation augmented with back-translated pseudo-units.
//!
//! A synthetic speech world is quantized into discrete units, unit-to-text and
//! text-to-unit translation models are trained, and tagged back-translated
//! pseudo-units from monolingual text augment the forward model's training data.

pub mod error;
pub mod config;
pub mod decode;
pub mod dub;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod rng;
pub mod vocab;
pub mod world;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use model::{init_model, ModelConfig, Parameters, TrainConfig};
pub use quantizer::{fit_kmeans, Codebook, UnitSequence};
pub use vocab::{learn_vocab, Vocabulary};
pub use world::{build_world, sample_corpus, CorpusSplit, Utterance, WorldConfig, WorldSpec};
