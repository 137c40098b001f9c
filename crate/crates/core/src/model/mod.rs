//! Encoder-decoder Transformer shared by both translation directions.
//!
//! All weights live in one flat `Vec<f64>`; a [`Layout`] maps tensor names to
//! offsets. Gradients, optimizer state, checkpoint averaging and persistence
//! all operate on the same flat layout.

mod checkpoint;
pub mod ops;
mod train;
mod transformer;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::Codebook;
use crate::rng;
use crate::vocab::Vocabulary;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{average_parameters, lr_at, train, DataStream, LossLog, TrainConfig, TrainOutcome};
pub use transformer::{
    backward, forward_loss, loss_and_grad, DecoderState, EncoderMemory, Example, ForwardPass, LossStats, Source,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    UnitToText,
    TextToUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    UnitIds,
    ContinuousFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub max_len: usize,
    pub direction: Direction,
    pub input_mode: InputMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            enc_layers: 2,
            dec_layers: 2,
            hidden: 64,
            heads: 4,
            ffn: 128,
            dropout: 0.1,
            label_smoothing: 0.1,
            max_len: 256,
            direction: Direction::UnitToText,
            input_mode: InputMode::UnitIds,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("model: {m}")));
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("layer counts must be positive".into());
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} must be a positive multiple of heads {}", self.hidden, self.heads));
        }
        if self.ffn == 0 {
            return bad("ffn must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} must be in [0, 1)", self.label_smoothing));
        }
        if self.max_len < 2 {
            return bad("max_len must be >= 2".into());
        }
        if self.direction == Direction::TextToUnit && self.input_mode == InputMode::ContinuousFrames {
            return bad("continuous frames only make sense as unit-to-text input".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Sizes that come from the data rather than the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Input frame width in continuous mode; ignored otherwise.
    pub frame_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lin {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncLayerIdx {
    pub ln1: Norm,
    pub qkv: Lin,
    pub attn_out: Lin,
    pub ln2: Norm,
    pub ff1: Lin,
    pub ff2: Lin,
}

#[derive(Debug, Clone)]
pub(crate) struct DecLayerIdx {
    pub ln1: Norm,
    pub qkv: Lin,
    pub self_out: Lin,
    pub ln2: Norm,
    pub cross_q: Lin,
    pub cross_kv: Lin,
    pub cross_out: Lin,
    pub ln3: Norm,
    pub ff1: Lin,
    pub ff2: Lin,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SrcInput {
    Embed(usize),
    Project(Lin),
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub src: SrcInput,
    pub tgt_embed: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_ln: Norm,
    pub dec: Vec<DecLayerIdx>,
    pub dec_ln: Norm,
    pub out: Lin,
    pub tensors: Vec<TensorInfo>,
    pub len: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum InitKind {
    Xavier { fan_in: usize, fan_out: usize },
    Embedding,
    Zeros,
    Ones,
}

struct Builder {
    tensors: Vec<(TensorInfo, InitKind)>,
    len: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: InitKind) -> usize {
        let offset = self.len;
        self.len += shape.iter().product::<usize>();
        self.tensors.push((TensorInfo { name, shape, offset }, init));
        offset
    }

    fn lin(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Lin {
        let w = self.add(format!("{name}.weight"), vec![fan_in, fan_out], InitKind::Xavier { fan_in, fan_out });
        let b = self.add(format!("{name}.bias"), vec![fan_out], InitKind::Zeros);
        Lin { w, b, fan_in, fan_out }
    }

    fn norm(&mut self, name: &str, h: usize) -> Norm {
        let g = self.add(format!("{name}.gain"), vec![h], InitKind::Ones);
        let b = self.add(format!("{name}.bias"), vec![h], InitKind::Zeros);
        Norm { g, b }
    }
}

fn build_layout(config: &ModelConfig, shape: &ModelShape) -> (Layout, Vec<InitKind>) {
    let h = config.hidden;
    let f = config.ffn;
    let mut b = Builder { tensors: Vec::new(), len: 0 };
    let src = match config.input_mode {
        InputMode::UnitIds => SrcInput::Embed(b.add("src_embed".into(), vec![shape.src_vocab, h], InitKind::Embedding)),
        InputMode::ContinuousFrames => SrcInput::Project(b.lin("src_proj", shape.frame_dim, h)),
    };
    let tgt_embed = b.add("tgt_embed".into(), vec![shape.tgt_vocab, h], InitKind::Embedding);
    let enc = (0..config.enc_layers)
        .map(|l| {
            let p = format!("enc.{l}");
            EncLayerIdx {
                ln1: b.norm(&format!("{p}.ln1"), h),
                qkv: b.lin(&format!("{p}.self_attn.qkv"), h, 3 * h),
                attn_out: b.lin(&format!("{p}.self_attn.out"), h, h),
                ln2: b.norm(&format!("{p}.ln2"), h),
                ff1: b.lin(&format!("{p}.ffn.fc1"), h, f),
                ff2: b.lin(&format!("{p}.ffn.fc2"), f, h),
            }
        })
        .collect();
    let enc_ln = b.norm("enc.ln_final", h);
    let dec = (0..config.dec_layers)
        .map(|l| {
            let p = format!("dec.{l}");
            DecLayerIdx {
                ln1: b.norm(&format!("{p}.ln1"), h),
                qkv: b.lin(&format!("{p}.self_attn.qkv"), h, 3 * h),
                self_out: b.lin(&format!("{p}.self_attn.out"), h, h),
                ln2: b.norm(&format!("{p}.ln2"), h),
                cross_q: b.lin(&format!("{p}.cross_attn.q"), h, h),
                cross_kv: b.lin(&format!("{p}.cross_attn.kv"), h, 2 * h),
                cross_out: b.lin(&format!("{p}.cross_attn.out"), h, h),
                ln3: b.norm(&format!("{p}.ln3"), h),
                ff1: b.lin(&format!("{p}.ffn.fc1"), h, f),
                ff2: b.lin(&format!("{p}.ffn.fc2"), f, h),
            }
        })
        .collect();
    let dec_ln = b.norm("dec.ln_final", h);
    let out = b.lin("out_proj", h, shape.tgt_vocab);
    let (tensors, inits): (Vec<_>, Vec<_>) = b.tensors.into_iter().unzip();
    (
        Layout {
            src,
            tgt_embed,
            enc,
            enc_ln,
            dec,
            dec_ln,
            out,
            tensors,
            len: b.len,
        },
        inits,
    )
}

/// All weights of one translation model.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub values: Vec<f64>,
    pub(crate) layout: Layout,
}

impl PartialEq for Parameters {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.shape == other.shape && self.values == other.values
    }
}

impl Parameters {
    /// Scaled-uniform initialization: Xavier for projections, `U(-sqrt(3/h), sqrt(3/h))`
    /// for embedding rows, unit gains and zero biases.
    pub fn init(config: &ModelConfig, shape: ModelShape, seed: u64) -> Result<Self> {
        config.validate()?;
        if shape.src_vocab == 0 && config.input_mode == InputMode::UnitIds || shape.tgt_vocab == 0 {
            return Err(Error::Config("model: vocabulary sizes must be positive".into()));
        }
        if config.input_mode == InputMode::ContinuousFrames && shape.frame_dim == 0 {
            return Err(Error::Config("model: frame_dim must be positive".into()));
        }
        let (layout, inits) = build_layout(config, &shape);
        let mut values = vec![0.0; layout.len];
        let mut rng = rng::stream(seed, "init");
        let emb_a = (3.0 / config.hidden as f64).sqrt();
        for (t, init) in layout.tensors.iter().zip(&inits) {
            let n: usize = t.shape.iter().product();
            let dst = &mut values[t.offset..t.offset + n];
            match *init {
                InitKind::Xavier { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    dst.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
                }
                InitKind::Embedding => dst.iter_mut().for_each(|v| *v = rng.random_range(-emb_a..emb_a)),
                InitKind::Zeros => {}
                InitKind::Ones => dst.iter_mut().for_each(|v| *v = 1.0),
            }
        }
        Ok(Self {
            config: config.clone(),
            shape,
            values,
            layout,
        })
    }

    /// Rebuilds parameters from a flat vector produced by the same config and shape.
    pub fn from_values(config: &ModelConfig, shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (layout, _) = build_layout(config, &shape);
        if values.len() != layout.len {
            return Err(Error::Shape {
                expected: layout.len,
                got: values.len(),
            });
        }
        Ok(Self {
            config: config.clone(),
            shape,
            values,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn manifest(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.tensors.iter().find(|t| t.name == name).map(|t| {
            let n: usize = t.shape.iter().product();
            &self.values[t.offset..t.offset + n]
        })
    }

    /// Source embedding row for an id (unit-id input mode only).
    pub fn src_embedding_row(&self, id: u32) -> Option<&[f64]> {
        match self.layout.src {
            SrcInput::Embed(off) if (id as usize) < self.shape.src_vocab => {
                let h = self.config.hidden;
                Some(&self.values[off + id as usize * h..off + (id as usize + 1) * h])
            }
            _ => None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Builds a model over the joint vocabulary. With `pretrained_embedding`, each
/// unit symbol's source embedding row becomes `(centroid ‖ 0…0)`.
pub fn init_model(
    config: &ModelConfig,
    vocab: &Vocabulary,
    codebook: Option<&Codebook>,
    pretrained_embedding: bool,
    seed: u64,
) -> Result<Parameters> {
    let frame_dim = codebook.map_or(0, Codebook::dim);
    let shape = ModelShape {
        src_vocab: vocab.size(),
        tgt_vocab: vocab.size(),
        frame_dim,
    };
    let mut params = Parameters::init(config, shape, seed)?;
    if pretrained_embedding {
        if config.input_mode != InputMode::UnitIds {
            return Err(Error::Config("pre-trained embedding requires unit-id input".into()));
        }
        let cb = codebook.ok_or_else(|| Error::Config("pre-trained embedding requires a codebook".into()))?;
        let h = config.hidden;
        if cb.dim() > h {
            return Err(Error::Config(format!(
                "centroid dimension {} exceeds hidden size {h}",
                cb.dim()
            )));
        }
        if cb.k() != vocab.unit_count() {
            return Err(Error::Config(format!(
                "codebook has {} centroids but the vocabulary has {} unit symbols",
                cb.k(),
                vocab.unit_count()
            )));
        }
        let SrcInput::Embed(off) = params.layout.src else { unreachable!() };
        for k in 0..cb.k() {
            let id = vocab.unit_id(k as u32)? as usize;
            let row = &mut params.values[off + id * h..off + (id + 1) * h];
            row.iter_mut().for_each(|v| *v = 0.0);
            row[..cb.dim()].copy_from_slice(cb.centroid(k));
        }
    }
    Ok(params)
}
