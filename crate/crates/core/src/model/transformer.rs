//! Pre-LayerNorm encoder-decoder forward and backward passes over packed
//! variable-length batches, plus single-step incremental decoding.

use rand::Rng;

use super::ops::{
    attention_backward, attention_forward, layer_norm_backward, layer_norm_forward, linear_backward,
    linear_forward, log_softmax_row, sinusoidal_positions, AttnShape, HeadView, LnCache, Segment,
};
use super::{DecLayerIdx, EncLayerIdx, InputMode, Lin, Norm, Parameters, SrcInput};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::StreamRng;
use crate::vocab::PAD;

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Ids(Vec<u32>),
    Frames(Matrix),
}

impl Source {
    pub fn len(&self) -> usize {
        match self {
            Source::Ids(ids) => ids.len(),
            Source::Frames(f) => f.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One training pair. `target` is the full `[BOS, .., EOS]` sequence; the
/// decoder reads `target[..n-1]` and predicts `target[1..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub source: Source,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    /// Label-smoothed cross-entropy averaged over non-pad target positions.
    pub loss: f64,
    /// Plain negative log-likelihood averaged over the same positions.
    pub nll: f64,
    pub tokens: usize,
}

#[derive(Debug, Default)]
struct EncCache {
    ln1: LnCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    o: Vec<f64>,
    m1: Option<Vec<f64>>,
    ln2: LnCache,
    b: Vec<f64>,
    f: Vec<f64>,
    m2: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
struct DecCache {
    ln1: LnCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    self_probs: Vec<f64>,
    o1: Vec<f64>,
    m1: Option<Vec<f64>>,
    ln2: LnCache,
    c: Vec<f64>,
    q2: Vec<f64>,
    kv2: Vec<f64>,
    cross_probs: Vec<f64>,
    o2: Vec<f64>,
    m2: Option<Vec<f64>>,
    ln3: LnCache,
    b: Vec<f64>,
    f: Vec<f64>,
    m3: Option<Vec<f64>>,
}

/// Result of a teacher-forced forward pass, holding what backward needs.
#[derive(Debug)]
pub struct ForwardPass {
    pub stats: LossStats,
    /// `target rows x tgt_vocab`, packed over the batch.
    pub logits: Vec<f64>,
    src_segs: Vec<Segment>,
    tgt_segs: Vec<Segment>,
    src_ids: Vec<u32>,
    src_frames: Vec<f64>,
    src_mask: Option<Vec<f64>>,
    tgt_in: Vec<u32>,
    tgt_mask: Option<Vec<f64>>,
    enc: Vec<EncCache>,
    enc_ln: LnCache,
    enc_out: Vec<f64>,
    dec: Vec<DecCache>,
    dec_ln: LnCache,
    dec_out: Vec<f64>,
    dlogits: Vec<f64>,
}

fn slice(values: &[f64], off: usize, len: usize) -> &[f64] {
    &values[off..off + len]
}

fn lin_fwd(p: &[f64], l: Lin, x: &[f64], rows: usize, y: &mut Vec<f64>) {
    y.resize(rows * l.fan_out, 0.0);
    linear_forward(
        x,
        slice(p, l.w, l.fan_in * l.fan_out),
        slice(p, l.b, l.fan_out),
        rows,
        l.fan_in,
        l.fan_out,
        y,
    );
}

fn lin_bwd(p: &[f64], g: &mut [f64], l: Lin, x: &[f64], dy: &[f64], rows: usize, dx: Option<(&mut [f64], f64)>) {
    let (gw, gb) = split_grad(g, l);
    linear_backward(x, slice(p, l.w, l.fan_in * l.fan_out), dy, rows, l.fan_in, l.fan_out, gw, gb, dx);
}

/// Disjoint mutable views of a linear layer's weight and bias gradients.
fn split_grad(g: &mut [f64], l: Lin) -> (&mut [f64], &mut [f64]) {
    let wn = l.fan_in * l.fan_out;
    if l.w < l.b {
        let (lo, hi) = g.split_at_mut(l.b);
        (&mut lo[l.w..l.w + wn], &mut hi[..l.fan_out])
    } else {
        let (lo, hi) = g.split_at_mut(l.w);
        (&mut hi[..wn], &mut lo[l.b..l.b + l.fan_out])
    }
}

fn split_norm(g: &mut [f64], n: Norm, h: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(n.g + h <= n.b);
    let (lo, hi) = g.split_at_mut(n.b);
    (&mut lo[n.g..n.g + h], &mut hi[..h])
}

fn ln_fwd(p: &[f64], n: Norm, h: usize, x: &[f64], rows: usize, y: &mut Vec<f64>, cache: Option<&mut LnCache>) {
    y.resize(rows * h, 0.0);
    layer_norm_forward(x, slice(p, n.g, h), slice(p, n.b, h), rows, h, y, cache);
}

fn ln_bwd(p: &[f64], g: &mut [f64], n: Norm, h: usize, cache: &LnCache, dy: &[f64], rows: usize, dx: &mut [f64]) {
    let (gg, gb) = split_norm(g, n, h);
    layer_norm_backward(cache, slice(p, n.g, h), dy, rows, h, gg, gb, dx);
}

fn dropout_mask(rng: Option<&mut StreamRng>, n: usize, rate: f64) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn segments(lens: impl Iterator<Item = usize>) -> Vec<Segment> {
    let mut start = 0;
    lens.map(|len| {
        let s = Segment { start, len };
        start += len;
        s
    })
    .collect()
}

impl Parameters {
    fn check_example(&self, ex: &Example) -> Result<()> {
        let max = self.config.max_len;
        match (&ex.source, self.config.input_mode) {
            (Source::Ids(ids), InputMode::UnitIds) => {
                for &id in ids {
                    if id as usize >= self.shape.src_vocab {
                        return Err(Error::Index {
                            index: id as usize,
                            bound: self.shape.src_vocab,
                        });
                    }
                }
            }
            (Source::Frames(f), InputMode::ContinuousFrames) => {
                if f.cols() != self.shape.frame_dim {
                    return Err(Error::Shape {
                        expected: self.shape.frame_dim,
                        got: f.cols(),
                    });
                }
            }
            _ => return Err(Error::Config("source kind does not match the model input mode".into())),
        }
        if ex.source.is_empty() {
            return Err(Error::Empty("source sequence".into()));
        }
        if ex.source.len() > max {
            return Err(Error::Truncation {
                len: ex.source.len(),
                max,
            });
        }
        if ex.target.len() < 2 {
            return Err(Error::Empty("target needs at least BOS and EOS".into()));
        }
        if ex.target.len() - 1 > max {
            return Err(Error::Truncation {
                len: ex.target.len() - 1,
                max,
            });
        }
        for &id in &ex.target {
            if id as usize >= self.shape.tgt_vocab {
                return Err(Error::Index {
                    index: id as usize,
                    bound: self.shape.tgt_vocab,
                });
            }
        }
        Ok(())
    }

    fn embed_ids(&self, table: usize, ids: &[u32], segs: &[Segment], x: &mut Vec<f64>) {
        let h = self.config.hidden;
        let scale = (h as f64).sqrt();
        let maxlen = segs.iter().map(|s| s.len).max().unwrap_or(0);
        let pe = sinusoidal_positions(maxlen, h);
        x.resize(ids.len() * h, 0.0);
        for s in segs {
            for pos in 0..s.len {
                let r = s.start + pos;
                let e = slice(&self.values, table + ids[r] as usize * h, h);
                let out = &mut x[r * h..(r + 1) * h];
                for j in 0..h {
                    out[j] = e[j] * scale + pe[pos * h + j];
                }
            }
        }
    }

    fn embed_frames(&self, l: Lin, frames: &[f64], segs: &[Segment], x: &mut Vec<f64>) {
        let h = self.config.hidden;
        let rows = frames.len() / l.fan_in;
        lin_fwd(&self.values, l, frames, rows, x);
        let maxlen = segs.iter().map(|s| s.len).max().unwrap_or(0);
        let pe = sinusoidal_positions(maxlen, h);
        for s in segs {
            for pos in 0..s.len {
                add_into(&mut x[(s.start + pos) * h..(s.start + pos + 1) * h], &pe[pos * h..(pos + 1) * h]);
            }
        }
    }

    fn encoder_layer_forward(
        &self,
        l: &EncLayerIdx,
        x: &mut [f64],
        segs: &[Segment],
        c: &mut EncCache,
        mut rng: Option<&mut StreamRng>,
    ) {
        let p = &self.values;
        let h = self.config.hidden;
        let rows = x.len() / h;
        let rate = self.config.dropout;
        ln_fwd(p, l.ln1, h, x, rows, &mut c.a, Some(&mut c.ln1));
        lin_fwd(p, l.qkv, &c.a, rows, &mut c.qkv);
        c.o.resize(rows * h, 0.0);
        let shape = AttnShape {
            heads: self.config.heads,
            head_dim: self.config.head_dim(),
            q_segs: segs,
            k_segs: segs,
            causal: false,
        };
        let (qv, kv, vv) = qkv_views(h);
        attention_forward(&shape, &c.qkv, qv, &c.qkv, kv, &c.qkv, vv, &mut c.o, &mut c.probs);
        let mut y = Vec::new();
        lin_fwd(p, l.attn_out, &c.o, rows, &mut y);
        c.m1 = dropout_mask(rng.as_deref_mut(), y.len(), rate);
        apply_mask(&mut y, &c.m1);
        add_into(x, &y);

        ln_fwd(p, l.ln2, h, x, rows, &mut c.b, Some(&mut c.ln2));
        lin_fwd(p, l.ff1, &c.b, rows, &mut c.f);
        c.f.iter_mut().for_each(|v| *v = v.max(0.0));
        lin_fwd(p, l.ff2, &c.f, rows, &mut y);
        c.m2 = dropout_mask(rng, y.len(), rate);
        apply_mask(&mut y, &c.m2);
        add_into(x, &y);
    }

    fn encoder_layer_backward(&self, l: &EncLayerIdx, c: &EncCache, segs: &[Segment], dx: &mut [f64], g: &mut [f64]) {
        let p = &self.values;
        let h = self.config.hidden;
        let fdim = self.config.ffn;
        let rows = dx.len() / h;

        let mut dz = dx.to_vec();
        apply_mask(&mut dz, &c.m2);
        let mut df = vec![0.0; rows * fdim];
        lin_bwd(p, g, l.ff2, &c.f, &dz, rows, Some((&mut df, 0.0)));
        df.iter_mut().zip(&c.f).for_each(|(d, f)| {
            if *f <= 0.0 {
                *d = 0.0
            }
        });
        let mut db = vec![0.0; rows * h];
        lin_bwd(p, g, l.ff1, &c.b, &df, rows, Some((&mut db, 0.0)));
        ln_bwd(p, g, l.ln2, h, &c.ln2, &db, rows, dx);

        let mut dy = dx.to_vec();
        apply_mask(&mut dy, &c.m1);
        let mut dout = vec![0.0; rows * h];
        lin_bwd(p, g, l.attn_out, &c.o, &dy, rows, Some((&mut dout, 0.0)));
        let mut dqkv = vec![0.0; rows * 3 * h];
        let shape = AttnShape {
            heads: self.config.heads,
            head_dim: self.config.head_dim(),
            q_segs: segs,
            k_segs: segs,
            causal: false,
        };
        let (qv, kv, vv) = qkv_views(h);
        let (dq, dk, dv) = (&mut dqkv.clone(), &mut dqkv.clone(), &mut dqkv);
        attention_backward(&shape, &c.qkv, qv, &c.qkv, kv, &c.qkv, vv, &c.probs, &dout, dq, dk, dv);
        // dq/dk/dv each touch disjoint column blocks, so summing recombines them.
        add_into(dv, dq);
        add_into(dv, dk);
        let mut da = vec![0.0; rows * h];
        lin_bwd(p, g, l.qkv, &c.a, dv, rows, Some((&mut da, 0.0)));
        ln_bwd(p, g, l.ln1, h, &c.ln1, &da, rows, dx);
    }

    #[allow(clippy::too_many_arguments)]
    fn decoder_layer_forward(
        &self,
        l: &DecLayerIdx,
        x: &mut [f64],
        segs: &[Segment],
        enc_out: &[f64],
        enc_segs: &[Segment],
        c: &mut DecCache,
        mut rng: Option<&mut StreamRng>,
    ) {
        let p = &self.values;
        let h = self.config.hidden;
        let rows = x.len() / h;
        let enc_rows = enc_out.len() / h;
        let rate = self.config.dropout;
        let heads = self.config.heads;
        let dh = self.config.head_dim();

        ln_fwd(p, l.ln1, h, x, rows, &mut c.a, Some(&mut c.ln1));
        lin_fwd(p, l.qkv, &c.a, rows, &mut c.qkv);
        c.o1.resize(rows * h, 0.0);
        let self_shape = AttnShape {
            heads,
            head_dim: dh,
            q_segs: segs,
            k_segs: segs,
            causal: true,
        };
        let (qv, kv, vv) = qkv_views(h);
        attention_forward(&self_shape, &c.qkv, qv, &c.qkv, kv, &c.qkv, vv, &mut c.o1, &mut c.self_probs);
        let mut y = Vec::new();
        lin_fwd(p, l.self_out, &c.o1, rows, &mut y);
        c.m1 = dropout_mask(rng.as_deref_mut(), y.len(), rate);
        apply_mask(&mut y, &c.m1);
        add_into(x, &y);

        ln_fwd(p, l.ln2, h, x, rows, &mut c.c, Some(&mut c.ln2));
        lin_fwd(p, l.cross_q, &c.c, rows, &mut c.q2);
        lin_fwd(p, l.cross_kv, enc_out, enc_rows, &mut c.kv2);
        c.o2.resize(rows * h, 0.0);
        let cross_shape = AttnShape {
            heads,
            head_dim: dh,
            q_segs: segs,
            k_segs: enc_segs,
            causal: false,
        };
        let (qv, kv, vv) = cross_views(h);
        attention_forward(&cross_shape, &c.q2, qv, &c.kv2, kv, &c.kv2, vv, &mut c.o2, &mut c.cross_probs);
        lin_fwd(p, l.cross_out, &c.o2, rows, &mut y);
        c.m2 = dropout_mask(rng.as_deref_mut(), y.len(), rate);
        apply_mask(&mut y, &c.m2);
        add_into(x, &y);

        ln_fwd(p, l.ln3, h, x, rows, &mut c.b, Some(&mut c.ln3));
        lin_fwd(p, l.ff1, &c.b, rows, &mut c.f);
        c.f.iter_mut().for_each(|v| *v = v.max(0.0));
        lin_fwd(p, l.ff2, &c.f, rows, &mut y);
        c.m3 = dropout_mask(rng, y.len(), rate);
        apply_mask(&mut y, &c.m3);
        add_into(x, &y);
    }

    #[allow(clippy::too_many_arguments)]
    fn decoder_layer_backward(
        &self,
        l: &DecLayerIdx,
        c: &DecCache,
        segs: &[Segment],
        enc_out: &[f64],
        enc_segs: &[Segment],
        dx: &mut [f64],
        d_enc: &mut [f64],
        g: &mut [f64],
    ) {
        let p = &self.values;
        let h = self.config.hidden;
        let fdim = self.config.ffn;
        let rows = dx.len() / h;
        let enc_rows = enc_out.len() / h;
        let heads = self.config.heads;
        let dh = self.config.head_dim();

        // feed-forward
        let mut dz = dx.to_vec();
        apply_mask(&mut dz, &c.m3);
        let mut df = vec![0.0; rows * fdim];
        lin_bwd(p, g, l.ff2, &c.f, &dz, rows, Some((&mut df, 0.0)));
        df.iter_mut().zip(&c.f).for_each(|(d, f)| {
            if *f <= 0.0 {
                *d = 0.0
            }
        });
        let mut tmp = vec![0.0; rows * h];
        lin_bwd(p, g, l.ff1, &c.b, &df, rows, Some((&mut tmp, 0.0)));
        ln_bwd(p, g, l.ln3, h, &c.ln3, &tmp, rows, dx);

        // cross-attention
        let mut dy = dx.to_vec();
        apply_mask(&mut dy, &c.m2);
        let mut do2 = vec![0.0; rows * h];
        lin_bwd(p, g, l.cross_out, &c.o2, &dy, rows, Some((&mut do2, 0.0)));
        let mut dq2 = vec![0.0; rows * h];
        let mut dk2 = vec![0.0; enc_rows * 2 * h];
        let mut dv2 = vec![0.0; enc_rows * 2 * h];
        let cross_shape = AttnShape {
            heads,
            head_dim: dh,
            q_segs: segs,
            k_segs: enc_segs,
            causal: false,
        };
        let (qv, kv, vv) = cross_views(h);
        attention_backward(
            &cross_shape,
            &c.q2,
            qv,
            &c.kv2,
            kv,
            &c.kv2,
            vv,
            &c.cross_probs,
            &do2,
            &mut dq2,
            &mut dk2,
            &mut dv2,
        );
        add_into(&mut dv2, &dk2);
        lin_bwd(p, g, l.cross_kv, enc_out, &dv2, enc_rows, Some((d_enc, 1.0)));
        lin_bwd(p, g, l.cross_q, &c.c, &dq2, rows, Some((&mut tmp, 0.0)));
        ln_bwd(p, g, l.ln2, h, &c.ln2, &tmp, rows, dx);

        // causal self-attention
        let mut dy = dx.to_vec();
        apply_mask(&mut dy, &c.m1);
        let mut do1 = vec![0.0; rows * h];
        lin_bwd(p, g, l.self_out, &c.o1, &dy, rows, Some((&mut do1, 0.0)));
        let mut dq = vec![0.0; rows * 3 * h];
        let mut dk = vec![0.0; rows * 3 * h];
        let mut dv = vec![0.0; rows * 3 * h];
        let self_shape = AttnShape {
            heads,
            head_dim: dh,
            q_segs: segs,
            k_segs: segs,
            causal: true,
        };
        let (qv, kv, vv) = qkv_views(h);
        attention_backward(
            &self_shape,
            &c.qkv,
            qv,
            &c.qkv,
            kv,
            &c.qkv,
            vv,
            &c.self_probs,
            &do1,
            &mut dq,
            &mut dk,
            &mut dv,
        );
        add_into(&mut dv, &dq);
        add_into(&mut dv, &dk);
        lin_bwd(p, g, l.qkv, &c.a, &dv, rows, Some((&mut tmp, 0.0)));
        ln_bwd(p, g, l.ln1, h, &c.ln1, &tmp, rows, dx);
    }

    fn run(&self, examples: &[Example], mut rng: Option<&mut StreamRng>) -> Result<ForwardPass> {
        for ex in examples {
            self.check_example(ex)?;
        }
        let h = self.config.hidden;
        let v = self.shape.tgt_vocab;
        let rate = self.config.dropout;
        let src_segs = segments(examples.iter().map(|e| e.source.len()));
        let tgt_segs = segments(examples.iter().map(|e| e.target.len() - 1));
        let src_rows: usize = src_segs.iter().map(|s| s.len).sum();
        let tgt_rows: usize = tgt_segs.iter().map(|s| s.len).sum();

        // encoder input
        let mut src_ids = Vec::new();
        let mut src_frames = Vec::new();
        let mut x = Vec::new();
        match self.layout.src {
            SrcInput::Embed(table) => {
                for e in examples {
                    if let Source::Ids(ids) = &e.source {
                        src_ids.extend_from_slice(ids);
                    }
                }
                self.embed_ids(table, &src_ids, &src_segs, &mut x);
            }
            SrcInput::Project(l) => {
                for e in examples {
                    if let Source::Frames(f) = &e.source {
                        src_frames.extend_from_slice(f.as_slice());
                    }
                }
                self.embed_frames(l, &src_frames, &src_segs, &mut x);
            }
        }
        let src_mask = dropout_mask(rng.as_deref_mut(), x.len(), rate);
        apply_mask(&mut x, &src_mask);

        let mut enc = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let mut c = EncCache::default();
            self.encoder_layer_forward(l, &mut x, &src_segs, &mut c, rng.as_deref_mut());
            enc.push(c);
        }
        let mut enc_ln = LnCache::default();
        let mut enc_out = Vec::new();
        ln_fwd(&self.values, self.layout.enc_ln, h, &x, src_rows, &mut enc_out, Some(&mut enc_ln));

        // decoder
        let tgt_in: Vec<u32> = examples
            .iter()
            .flat_map(|e| e.target[..e.target.len() - 1].iter().copied())
            .collect();
        let tgt_out: Vec<u32> = examples.iter().flat_map(|e| e.target[1..].iter().copied()).collect();
        let mut y = Vec::new();
        self.embed_ids(self.layout.tgt_embed, &tgt_in, &tgt_segs, &mut y);
        let tgt_mask = dropout_mask(rng.as_deref_mut(), y.len(), rate);
        apply_mask(&mut y, &tgt_mask);
        let mut dec = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let mut c = DecCache::default();
            self.decoder_layer_forward(l, &mut y, &tgt_segs, &enc_out, &src_segs, &mut c, rng.as_deref_mut());
            dec.push(c);
        }
        let mut dec_ln = LnCache::default();
        let mut dec_out = Vec::new();
        ln_fwd(&self.values, self.layout.dec_ln, h, &y, tgt_rows, &mut dec_out, Some(&mut dec_ln));
        let mut logits = Vec::new();
        lin_fwd(&self.values, self.layout.out, &dec_out, tgt_rows, &mut logits);

        // label-smoothed cross-entropy, q = (1 - eps) onehot + eps / V
        let eps = self.config.label_smoothing;
        let counted = tgt_out.iter().filter(|&&t| t != PAD).count();
        let mut dlogits = vec![0.0; tgt_rows * v];
        let mut loss = 0.0;
        let mut nll = 0.0;
        let mut logp = vec![0.0; v];
        if counted > 0 {
            let inv_n = 1.0 / counted as f64;
            for (r, &t) in tgt_out.iter().enumerate() {
                if t == PAD {
                    continue;
                }
                let row = &logits[r * v..(r + 1) * v];
                log_softmax_row(row, &mut logp);
                let t = t as usize;
                let sum_logp: f64 = logp.iter().sum();
                nll -= logp[t];
                loss -= (1.0 - eps) * logp[t] + eps / v as f64 * sum_logp;
                let d = &mut dlogits[r * v..(r + 1) * v];
                for j in 0..v {
                    d[j] = (logp[j].exp() - eps / v as f64) * inv_n;
                }
                d[t] -= (1.0 - eps) * inv_n;
            }
            loss *= inv_n;
            nll *= inv_n;
        }

        Ok(ForwardPass {
            stats: LossStats {
                loss,
                nll,
                tokens: counted,
            },
            logits,
            src_segs,
            tgt_segs,
            src_ids,
            src_frames,
            src_mask,
            tgt_in,
            tgt_mask,
            enc,
            enc_ln,
            enc_out,
            dec,
            dec_ln,
            dec_out,
            dlogits,
        })
    }

    fn backward_pass(&self, fp: &ForwardPass) -> Result<Vec<f64>> {
        if !fp.stats.loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {}", fp.stats.loss)));
        }
        let p = &self.values;
        let h = self.config.hidden;
        let mut g = vec![0.0; self.values.len()];
        if fp.stats.tokens == 0 {
            return Ok(g);
        }
        let tgt_rows = fp.tgt_in.len();
        let src_rows = fp.enc_out.len() / h;

        let mut d_dec_out = vec![0.0; tgt_rows * h];
        lin_bwd(p, &mut g, self.layout.out, &fp.dec_out, &fp.dlogits, tgt_rows, Some((&mut d_dec_out, 0.0)));
        let mut dy = vec![0.0; tgt_rows * h];
        ln_bwd(p, &mut g, self.layout.dec_ln, h, &fp.dec_ln, &d_dec_out, tgt_rows, &mut dy);

        let mut d_enc = vec![0.0; src_rows * h];
        for (l, c) in self.layout.dec.iter().zip(&fp.dec).rev() {
            self.decoder_layer_backward(l, c, &fp.tgt_segs, &fp.enc_out, &fp.src_segs, &mut dy, &mut d_enc, &mut g);
        }
        apply_mask(&mut dy, &fp.tgt_mask);
        let scale = (h as f64).sqrt();
        for (r, &id) in fp.tgt_in.iter().enumerate() {
            let off = self.layout.tgt_embed + id as usize * h;
            for j in 0..h {
                g[off + j] += scale * dy[r * h + j];
            }
        }

        let mut dx = vec![0.0; src_rows * h];
        ln_bwd(p, &mut g, self.layout.enc_ln, h, &fp.enc_ln, &d_enc, src_rows, &mut dx);
        for (l, c) in self.layout.enc.iter().zip(&fp.enc).rev() {
            self.encoder_layer_backward(l, c, &fp.src_segs, &mut dx, &mut g);
        }
        apply_mask(&mut dx, &fp.src_mask);
        match self.layout.src {
            SrcInput::Embed(table) => {
                for (r, &id) in fp.src_ids.iter().enumerate() {
                    let off = table + id as usize * h;
                    for j in 0..h {
                        g[off + j] += scale * dx[r * h + j];
                    }
                }
            }
            SrcInput::Project(l) => {
                lin_bwd(p, &mut g, l, &fp.src_frames, &dx, src_rows, None);
            }
        }
        Ok(g)
    }
}

fn qkv_views(h: usize) -> (HeadView, HeadView, HeadView) {
    (
        HeadView { stride: 3 * h, offset: 0 },
        HeadView { stride: 3 * h, offset: h },
        HeadView {
            stride: 3 * h,
            offset: 2 * h,
        },
    )
}

fn cross_views(h: usize) -> (HeadView, HeadView, HeadView) {
    (
        HeadView { stride: h, offset: 0 },
        HeadView { stride: 2 * h, offset: 0 },
        HeadView { stride: 2 * h, offset: h },
    )
}

/// Teacher-forced forward pass without dropout.
pub fn forward_loss(params: &Parameters, examples: &[Example]) -> Result<ForwardPass> {
    params.run(examples, None)
}

/// Gradient of the averaged loss of `fp` with respect to every parameter.
pub fn backward(params: &Parameters, fp: &ForwardPass) -> Result<Vec<f64>> {
    params.backward_pass(fp)
}

/// Forward plus backward; `rng` enables dropout.
pub fn loss_and_grad(
    params: &Parameters,
    examples: &[Example],
    rng: Option<&mut StreamRng>,
) -> Result<(LossStats, Vec<f64>)> {
    let fp = params.run(examples, rng)?;
    let g = params.backward_pass(&fp)?;
    Ok((fp.stats, g))
}

/// Encoder output projected to per-layer cross-attention keys and values.
#[derive(Debug, Clone)]
pub struct EncoderMemory {
    src_len: usize,
    cross_kv: Vec<Vec<f64>>,
}

/// Cached self-attention keys/values of the tokens decoded so far.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pos: usize,
    self_kv: Vec<Vec<f64>>,
}

impl DecoderState {
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl Parameters {
    pub fn encode(&self, source: &Source) -> Result<EncoderMemory> {
        let ex = Example {
            source: source.clone(),
            target: vec![0, 0],
        };
        self.check_example(&ex)?;
        let h = self.config.hidden;
        let segs = [Segment {
            start: 0,
            len: source.len(),
        }];
        let mut x = Vec::new();
        match (self.layout.src, source) {
            (SrcInput::Embed(table), Source::Ids(ids)) => self.embed_ids(table, ids, &segs, &mut x),
            (SrcInput::Project(l), Source::Frames(f)) => self.embed_frames(l, f.as_slice(), &segs, &mut x),
            _ => unreachable!("checked by check_example"),
        }
        for l in &self.layout.enc {
            let mut c = EncCache::default();
            self.encoder_layer_forward(l, &mut x, &segs, &mut c, None);
        }
        let mut enc_out = Vec::new();
        ln_fwd(&self.values, self.layout.enc_ln, h, &x, source.len(), &mut enc_out, None);
        let cross_kv = self
            .layout
            .dec
            .iter()
            .map(|l| {
                let mut kv = Vec::new();
                lin_fwd(&self.values, l.cross_kv, &enc_out, source.len(), &mut kv);
                kv
            })
            .collect();
        Ok(EncoderMemory {
            src_len: source.len(),
            cross_kv,
        })
    }

    pub fn start_decoder(&self) -> DecoderState {
        DecoderState {
            pos: 0,
            self_kv: vec![Vec::new(); self.layout.dec.len()],
        }
    }

    /// Feeds one token and returns next-token logits.
    pub fn decode_step(&self, mem: &EncoderMemory, state: &mut DecoderState, token: u32) -> Result<Vec<f64>> {
        if token as usize >= self.shape.tgt_vocab {
            return Err(Error::Index {
                index: token as usize,
                bound: self.shape.tgt_vocab,
            });
        }
        if state.pos >= self.config.max_len {
            return Err(Error::Truncation {
                len: state.pos + 1,
                max: self.config.max_len,
            });
        }
        let p = &self.values;
        let h = self.config.hidden;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let pos = state.pos;
        let scale = (h as f64).sqrt();
        let pe = sinusoidal_positions(pos + 1, h);
        let e = slice(p, self.layout.tgt_embed + token as usize * h, h);
        let mut x: Vec<f64> = (0..h).map(|j| e[j] * scale + pe[pos * h + j]).collect();

        let one = [Segment { start: 0, len: 1 }];
        let mut a = Vec::new();
        let mut qkv = Vec::new();
        let mut o = vec![0.0; h];
        let mut y = Vec::new();
        let mut probs = Vec::new();
        for (li, l) in self.layout.dec.iter().enumerate() {
            ln_fwd(p, l.ln1, h, &x, 1, &mut a, None);
            lin_fwd(p, l.qkv, &a, 1, &mut qkv);
            let cache = &mut state.self_kv[li];
            cache.extend_from_slice(&qkv[h..3 * h]);
            let kseg = [Segment { start: 0, len: pos + 1 }];
            let shape = AttnShape {
                heads,
                head_dim: dh,
                q_segs: &one,
                k_segs: &kseg,
                causal: false,
            };
            attention_forward(
                &shape,
                &qkv,
                HeadView { stride: 3 * h, offset: 0 },
                cache,
                HeadView { stride: 2 * h, offset: 0 },
                cache,
                HeadView { stride: 2 * h, offset: h },
                &mut o,
                &mut probs,
            );
            lin_fwd(p, l.self_out, &o, 1, &mut y);
            add_into(&mut x, &y);

            ln_fwd(p, l.ln2, h, &x, 1, &mut a, None);
            lin_fwd(p, l.cross_q, &a, 1, &mut qkv);
            let kseg = [Segment {
                start: 0,
                len: mem.src_len,
            }];
            let shape = AttnShape {
                heads,
                head_dim: dh,
                q_segs: &one,
                k_segs: &kseg,
                causal: false,
            };
            let (qv, kv, vv) = cross_views(h);
            let kvbuf = &mem.cross_kv[li];
            attention_forward(&shape, &qkv, qv, kvbuf, kv, kvbuf, vv, &mut o, &mut probs);
            lin_fwd(p, l.cross_out, &o, 1, &mut y);
            add_into(&mut x, &y);

            ln_fwd(p, l.ln3, h, &x, 1, &mut a, None);
            let mut f = Vec::new();
            lin_fwd(p, l.ff1, &a, 1, &mut f);
            f.iter_mut().for_each(|v| *v = v.max(0.0));
            lin_fwd(p, l.ff2, &f, 1, &mut y);
            add_into(&mut x, &y);
        }
        ln_fwd(p, self.layout.dec_ln, h, &x, 1, &mut a, None);
        let mut logits = Vec::new();
        lin_fwd(p, self.layout.out, &a, 1, &mut logits);
        state.pos += 1;
        Ok(logits)
    }
}
