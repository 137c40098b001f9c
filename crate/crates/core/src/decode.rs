//! Autoregressive generation: greedy, beam search, ancestral sampling and
//! top-k sampling over any incremental [`StepModel`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ops::log_softmax_row;
use crate::model::{DecoderState, EncoderMemory, Parameters, Source};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMethod {
    Greedy,
    Beam,
    Sample,
    Topk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub method: DecodeMethod,
    pub beam_size: usize,
    pub k: usize,
    /// Cap on generated tokens, EOS included.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            method: DecodeMethod::Beam,
            beam_size: 5,
            k: 10,
            max_len: 128,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn beam(beam_size: usize) -> Self {
        Self {
            method: DecodeMethod::Beam,
            beam_size,
            ..Default::default()
        }
    }

    pub fn sampling(seed: u64) -> Self {
        Self {
            method: DecodeMethod::Sample,
            seed,
            ..Default::default()
        }
    }

    pub fn topk(k: usize, seed: u64) -> Self {
        Self {
            method: DecodeMethod::Topk,
            k,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.beam_size < 1 {
            return Err(Error::Config("decode: beam_size must be at least 1".into()));
        }
        if self.method == DecodeMethod::Topk && !(1..=vocab_size).contains(&self.k) {
            return Err(Error::Config(format!(
                "decode: k = {} outside 1..={vocab_size}",
                self.k
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("decode: max_len must be positive".into()));
        }
        Ok(())
    }
}

/// A generated sequence without BOS and without EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities, EOS included when finished.
    pub log_prob: f64,
    /// Whether generation ended with EOS rather than at `max_len`.
    pub finished: bool,
}

/// Incremental next-token scorer.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn start(&self) -> Self::State;
    /// Consumes `token` and returns logits for the next position.
    fn step(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>>;
}

/// A model bound to one encoded source.
pub struct Session<'a> {
    params: &'a Parameters,
    memory: EncoderMemory,
    allowed: Option<&'a [bool]>,
}

impl<'a> Session<'a> {
    pub fn new(params: &'a Parameters, source: &Source) -> Result<Self> {
        Self::restricted(params, source, None)
    }

    /// A session whose outputs are limited to ids with `allowed[id]` set.
    pub fn restricted(params: &'a Parameters, source: &Source, allowed: Option<&'a [bool]>) -> Result<Self> {
        if let Some(a) = allowed {
            if a.len() != params.shape.tgt_vocab {
                return Err(Error::Shape {
                    expected: params.shape.tgt_vocab,
                    got: a.len(),
                });
            }
            if !a.iter().any(|&x| x) {
                return Err(Error::Config("output mask allows no symbol".into()));
            }
        }
        Ok(Self {
            params,
            memory: params.encode(source)?,
            allowed,
        })
    }
}

impl StepModel for Session<'_> {
    type State = DecoderState;

    fn vocab_size(&self) -> usize {
        self.params.shape.tgt_vocab
    }

    fn start(&self) -> DecoderState {
        self.params.start_decoder()
    }

    fn step(&self, state: &mut DecoderState, token: u32) -> Result<Vec<f64>> {
        let mut logits = self.params.decode_step(&self.memory, state, token)?;
        if let Some(allowed) = self.allowed {
            for (l, &ok) in logits.iter_mut().zip(allowed) {
                if !ok {
                    *l = f64::NEG_INFINITY;
                }
            }
        }
        Ok(logits)
    }
}

fn log_probs(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    log_softmax_row(logits, &mut out);
    out
}

/// Index of the largest value, ties to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn greedy<M: StepModel>(model: &M, bos: u32, eos: u32, max_len: usize) -> Result<Hypothesis> {
    let mut state = model.start();
    let mut token = bos;
    let mut out = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let lp = log_probs(&model.step(&mut state, token)?);
        let next = argmax(&lp);
        out.log_prob += lp[next];
        token = next as u32;
        if token == eos {
            out.finished = true;
            break;
        }
        out.tokens.push(token);
    }
    Ok(out)
}

/// Beam search over summed log-probabilities without length normalization.
pub fn beam_search<M: StepModel>(model: &M, bos: u32, eos: u32, beam_size: usize, max_len: usize) -> Result<Hypothesis> {
    if beam_size < 1 {
        return Err(Error::Config("decode: beam_size must be at least 1".into()));
    }
    struct Beam<S> {
        tokens: Vec<u32>,
        score: f64,
        state: S,
        last: u32,
    }
    let mut live = vec![Beam {
        tokens: Vec::new(),
        score: 0.0,
        state: model.start(),
        last: bos,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut cands: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * model.vocab_size());
        let mut states = Vec::with_capacity(live.len());
        for (b, beam) in live.iter_mut().enumerate() {
            let mut st = beam.state.clone();
            let lp = log_probs(&model.step(&mut st, beam.last)?);
            states.push(st);
            cands.extend(lp.iter().enumerate().map(|(t, &l)| (beam.score + l, b, t as u32)));
        }
        // stable: equal scores keep (beam, token) order
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut next = Vec::with_capacity(beam_size);
        for (score, b, t) in cands {
            if next.len() == beam_size {
                break;
            }
            if t == eos {
                finished.push(Hypothesis {
                    tokens: live[b].tokens.clone(),
                    log_prob: score,
                    finished: true,
                });
            } else {
                let mut tokens = live[b].tokens.clone();
                tokens.push(t);
                next.push(Beam {
                    tokens,
                    score,
                    state: states[b].clone(),
                    last: t,
                });
            }
        }
        live = next;
        let best_done = finished.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        // scores only decrease, so no live beam can overtake a finished one
        if live.first().is_none_or(|b| best_done >= b.score) {
            break;
        }
    }

    let best_finished = finished
        .into_iter()
        .reduce(|a, b| if b.log_prob > a.log_prob { b } else { a });
    match best_finished {
        Some(h) => Ok(h),
        None => {
            let b = live
                .into_iter()
                .next()
                .ok_or_else(|| Error::Empty("beam search produced no hypothesis".into()))?;
            Ok(Hypothesis {
                tokens: b.tokens,
                log_prob: b.score,
                finished: false,
            })
        }
    }
}

/// Draws one token from the renormalized mass of the `k` most probable ids
/// using exactly one uniform variate; `k = V` is plain ancestral sampling.
fn draw(lp: &[f64], k: usize, rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let v = lp.len();
    let mut keep = vec![k >= v; v];
    if k < v {
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]));
        order[..k].iter().for_each(|&i| keep[i] = true);
    }
    let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let total: f64 = (0..v).filter(|&i| keep[i]).map(|i| probs[i]).sum();
    let target = u * total;
    let mut cum = 0.0;
    let mut last = 0;
    for i in (0..v).filter(|&i| keep[i]) {
        cum += probs[i];
        if probs[i] > 0.0 {
            last = i;
        }
        if cum > target {
            return i;
        }
    }
    last
}

fn sample_with<M: StepModel>(
    model: &M,
    bos: u32,
    eos: u32,
    k: usize,
    max_len: usize,
    rng: &mut StreamRng,
) -> Result<Hypothesis> {
    let mut state = model.start();
    let mut token = bos;
    let mut out = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let lp = log_probs(&model.step(&mut state, token)?);
        let next = draw(&lp, k, rng);
        out.log_prob += lp[next];
        token = next as u32;
        if token == eos {
            out.finished = true;
            break;
        }
        out.tokens.push(token);
    }
    Ok(out)
}

/// Ancestral sampling at temperature 1.
pub fn sample<M: StepModel>(model: &M, bos: u32, eos: u32, max_len: usize, rng: &mut StreamRng) -> Result<Hypothesis> {
    sample_with(model, bos, eos, model.vocab_size(), max_len, rng)
}

pub fn topk_sample<M: StepModel>(
    model: &M,
    bos: u32,
    eos: u32,
    k: usize,
    max_len: usize,
    rng: &mut StreamRng,
) -> Result<Hypothesis> {
    if !(1..=model.vocab_size()).contains(&k) {
        return Err(Error::Config(format!(
            "decode: k = {k} outside 1..={}",
            model.vocab_size()
        )));
    }
    sample_with(model, bos, eos, k, max_len, rng)
}

/// Runs the configured method with `rng` supplying the randomness.
pub fn generate<M: StepModel>(
    model: &M,
    bos: u32,
    eos: u32,
    config: &DecodeConfig,
    max_len: usize,
    rng: &mut StreamRng,
) -> Result<Hypothesis> {
    config.validate(model.vocab_size())?;
    match config.method {
        DecodeMethod::Greedy => greedy(model, bos, eos, max_len),
        DecodeMethod::Beam => beam_search(model, bos, eos, config.beam_size, max_len),
        DecodeMethod::Sample => sample(model, bos, eos, max_len, rng),
        DecodeMethod::Topk => topk_sample(model, bos, eos, config.k, max_len, rng),
    }
}

/// Decodes every source in parallel. Item `i` draws from its own stream
/// derived from `(config.seed, i)`, so results do not depend on scheduling.
/// `allowed` optionally restricts the output symbols and `max_len_for` maps a
/// source length to its generation cap.
pub fn decode_batch(
    params: &Parameters,
    sources: &[Source],
    config: &DecodeConfig,
    bos: u32,
    eos: u32,
    allowed: Option<&[bool]>,
    max_len_for: &(dyn Fn(usize) -> usize + Sync),
) -> Result<Vec<Hypothesis>> {
    config.validate(params.shape.tgt_vocab)?;
    sources
        .par_iter()
        .enumerate()
        .map(|(i, src)| {
            let session = Session::restricted(params, src, allowed)?;
            let mut rng = rng::item_stream(config.seed, "decode", i as u64);
            let cap = max_len_for(src.len()).min(config.max_len);
            generate(&session, bos, eos, config, cap, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed next-token distribution regardless of history.
    struct Fixed(Vec<f64>);

    impl StepModel for Fixed {
        type State = ();
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn start(&self) {}
        fn step(&self, _: &mut (), _: u32) -> Result<Vec<f64>> {
            Ok(self.0.iter().map(|p| p.ln()).collect())
        }
    }

    /// Forced sequence: logits one-hot on `seq[pos]`.
    struct Forced(Vec<u32>, usize);

    impl StepModel for Forced {
        type State = usize;
        fn vocab_size(&self) -> usize {
            self.1
        }
        fn start(&self) -> usize {
            0
        }
        fn step(&self, pos: &mut usize, _: u32) -> Result<Vec<f64>> {
            let mut l = vec![-1e9; self.1];
            l[self.0[*pos] as usize] = 0.0;
            *pos += 1;
            Ok(l)
        }
    }

    #[test]
    fn forced_logits_give_the_forced_sequence() {
        let m = Forced(vec![3, 4, 3, 2], 5);
        let want = vec![3, 4, 3];
        assert_eq!(greedy(&m, 1, 2, 10).unwrap().tokens, want);
        assert_eq!(beam_search(&m, 1, 2, 4, 10).unwrap().tokens, want);
        for seed in 0..5 {
            let mut r = rng::stream(seed, "s");
            let h = sample(&m, 1, 2, 10, &mut r).unwrap();
            assert_eq!(h.tokens, want);
            assert!(h.finished);
        }
    }

    #[test]
    fn max_len_bounds_output() {
        let m = Fixed(vec![0.1, 0.9]);
        let h = greedy(&m, 0, 7, 4).unwrap();
        assert_eq!(h.tokens.len(), 4);
        assert!(!h.finished);
        let h = beam_search(&m, 0, 7, 3, 4).unwrap();
        assert_eq!(h.tokens.len(), 4);
    }

    #[test]
    fn sampling_frequencies_match_softmax() {
        let p = [0.5, 0.3, 0.2];
        let m = Fixed(p.to_vec());
        let mut r = rng::stream(11, "mc");
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let h = sample(&m, 0, 9, 1, &mut r).unwrap();
            counts[h.tokens[0] as usize] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / 10_000.0 - q).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn topk_renormalizes_over_kept_tokens() {
        let m = Fixed(vec![0.5, 0.3, 0.2]);
        let mut r = rng::stream(12, "mc");
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let h = topk_sample(&m, 0, 9, 2, 1, &mut r).unwrap();
            counts[h.tokens[0] as usize] += 1;
        }
        assert_eq!(counts[2], 0);
        assert!((counts[0] as f64 / 10_000.0 - 0.625).abs() < 0.02, "{counts:?}");
    }

    #[test]
    fn topk_rejects_bad_k() {
        let m = Fixed(vec![0.5, 0.5]);
        let mut r = rng::stream(0, "x");
        assert!(topk_sample(&m, 0, 1, 0, 3, &mut r).is_err());
        assert!(topk_sample(&m, 0, 1, 3, 3, &mut r).is_err());
    }

    #[test]
    fn ties_break_to_lowest_id() {
        let m = Fixed(vec![0.25, 0.25, 0.25, 0.25]);
        assert_eq!(greedy(&m, 0, 9, 2).unwrap().tokens, vec![0, 0]);
        assert_eq!(beam_search(&m, 0, 9, 1, 2).unwrap().tokens, vec![0, 0]);
    }

    #[test]
    fn config_serializes_snake_case() {
        let c = DecodeConfig::topk(10, 3);
        let j = serde_json::to_value(&c).unwrap();
        assert_eq!(j["method"], "topk");
        assert_eq!(j["k"], 10);
    }

    #[test]
    fn restricted_session_only_emits_allowed_ids() {
        use crate::model::{ModelConfig, ModelShape};
        let cfg = ModelConfig {
            hidden: 8,
            heads: 2,
            ffn: 16,
            enc_layers: 1,
            dec_layers: 1,
            ..Default::default()
        };
        let shape = ModelShape {
            src_vocab: 10,
            tgt_vocab: 10,
            frame_dim: 0,
        };
        let params = Parameters::init(&cfg, shape, 4).unwrap();
        let allowed: Vec<bool> = (0..10).map(|i| i == 2 || i >= 7).collect();
        let sources: Vec<Source> = (0..20).map(|i| Source::Ids(vec![1, 5 + i % 4, 2])).collect();
        let hyps = decode_batch(&params, &sources, &DecodeConfig::sampling(9), 1, 2, Some(&allowed), &|_| 12).unwrap();
        for h in &hyps {
            assert!(h.tokens.iter().all(|&t| allowed[t as usize]), "{:?}", h.tokens);
        }
        assert!(Session::restricted(&params, &sources[0], Some(&allowed[..4])).is_err());
    }
}
