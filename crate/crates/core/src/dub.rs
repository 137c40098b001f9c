//! The back-translation pipeline: unit extraction, text-to-unit training,
//! tagged pseudo-unit generation, upsampled mixing and the forward model.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::decode::{decode_batch, DecodeConfig, DecodeMethod};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{bleu_tokens, corpus_uer, quantization_mse, BleuScore};
use crate::model::{
    init_model, train, DataStream, Direction, Example, InputMode, ModelConfig, Parameters, Source, TrainConfig,
    TrainOutcome,
};
use crate::quantizer::{extract_normalized_units, extract_units, fit_kmeans, Codebook, SpeakerStats, UnitSequence};
use crate::rng::{self, child_seed};
use crate::vocab::{learn_vocab, Symbol, Vocabulary, BOS, EOS, UNK};
use crate::world::{build_world, sample_corpus, CorpusSplit, Utterance, WorldSpec};

pub const MAX_AUTO_UPSAMPLE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub units: UnitSequence,
    pub target: Vec<String>,
    pub origin: Origin,
}

impl ParallelPair {
    /// Unit-to-text example; synthetic sources carry the BT tag after BOS.
    pub fn u2tt_example(&self, vocab: &Vocabulary) -> Result<Example> {
        Ok(Example {
            source: Source::Ids(vocab.unit_source(&self.units, self.origin == Origin::Synthetic)?),
            target: vocab.text_sequence(&self.target),
        })
    }

    pub fn t2ut_example(&self, vocab: &Vocabulary) -> Result<Example> {
        Ok(Example {
            source: Source::Ids(vocab.text_sequence(&self.target)),
            target: vocab.unit_source(&self.units, false)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub pairs: Vec<ParallelPair>,
    /// Utterances dropped because they had no frames.
    pub skipped: usize,
}

/// Extracts (optionally speaker-normalized) units for every utterance.
pub fn prepare_unit_corpus(
    codebook: &Codebook,
    utterances: &[Utterance],
    speaker_norm: Option<&SpeakerStats>,
) -> Result<PreparedCorpus> {
    let mut pairs = Vec::with_capacity(utterances.len());
    let mut skipped = 0;
    for u in utterances {
        if u.frames.rows() == 0 {
            skipped += 1;
            continue;
        }
        let ex = match speaker_norm {
            Some(stats) => extract_normalized_units(codebook, &u.frames, u.speaker_id, stats)?,
            None => {
                let mut ex = extract_units(codebook, &u.frames)?;
                ex.units.speaker_id = Some(u.speaker_id);
                ex
            }
        };
        pairs.push(ParallelPair {
            units: ex.units,
            target: u.target_tokens.clone(),
            origin: Origin::Original,
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} utterances without frames");
    }
    Ok(PreparedCorpus { pairs, skipped })
}

/// `max(1, round(synthetic / original))`, capped at [`MAX_AUTO_UPSAMPLE`].
pub fn auto_upsample_rate(original: usize, synthetic: usize) -> usize {
    if original == 0 {
        return 1;
    }
    let r = (synthetic as f64 / original as f64).round() as usize;
    r.clamp(1, MAX_AUTO_UPSAMPLE)
}

/// Each original pair `r` times plus every synthetic pair once, shuffled.
pub fn build_mixture(
    original: &[ParallelPair],
    synthetic: &[ParallelPair],
    upsample_rate: usize,
    shuffle_seed: u64,
) -> Result<Vec<ParallelPair>> {
    if upsample_rate < 1 {
        return Err(Error::Config("mixture: upsample_rate must be at least 1".into()));
    }
    let mut stream = Vec::with_capacity(upsample_rate * original.len() + synthetic.len());
    for _ in 0..upsample_rate {
        stream.extend_from_slice(original);
    }
    stream.extend_from_slice(synthetic);
    stream.shuffle(&mut rng::stream(shuffle_seed, "mixture"));
    Ok(stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub best_step: usize,
    pub initial_dev_nll: f64,
    pub best_dev_nll: f64,
    pub final_dev_nll: f64,
}

impl From<&TrainOutcome> for TrainSummary {
    fn from(o: &TrainOutcome) -> Self {
        Self {
            steps: o.steps,
            best_step: o.best_step,
            initial_dev_nll: o.log.dev.first().map_or(f64::NAN, |d| d.1),
            best_dev_nll: o.best_dev_nll,
            final_dev_nll: o.final_dev_nll,
        }
    }
}

/// Trains one model of either direction from an explicit example list.
#[allow(clippy::too_many_arguments)]
pub fn fit_model(
    model: &ModelConfig,
    vocab: &Vocabulary,
    codebook: Option<&Codebook>,
    pretrained_embedding: bool,
    init_seed: u64,
    train_examples: Vec<Example>,
    dev_examples: &[Example],
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = init_model(model, vocab, codebook, pretrained_embedding, init_seed)?;
    let mut stream = DataStream::new(train_examples, train_config.batch_tokens, train_config.seed)?;
    train(params, &mut stream, dev_examples, train_config)
}

/// Trains the text-to-unit model on original pairs.
pub fn train_t2ut(
    pairs: &[ParallelPair],
    dev: &[ParallelPair],
    vocab: &Vocabulary,
    model: &ModelConfig,
    train_config: &TrainConfig,
    init_seed: u64,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Empty("no pairs to train the text-to-unit model".into()));
    }
    let model = ModelConfig {
        direction: Direction::TextToUnit,
        input_mode: InputMode::UnitIds,
        ..model.clone()
    };
    let train_ex = pairs.iter().map(|p| p.t2ut_example(vocab)).collect::<Result<Vec<_>>>()?;
    let dev_ex = dev.iter().map(|p| p.t2ut_example(vocab)).collect::<Result<Vec<_>>>()?;
    fit_model(&model, vocab, None, false, init_seed, train_ex, &dev_ex, train_config)
}

/// Trains the unit-to-text model on a (possibly mixed) pair stream.
pub fn train_u2tt(
    stream: &[ParallelPair],
    dev: &[ParallelPair],
    vocab: &Vocabulary,
    codebook: Option<&Codebook>,
    pretrained_embedding: bool,
    model: &ModelConfig,
    train_config: &TrainConfig,
    init_seed: u64,
) -> Result<TrainOutcome> {
    let model = ModelConfig {
        direction: Direction::UnitToText,
        input_mode: InputMode::UnitIds,
        ..model.clone()
    };
    let train_ex = stream.iter().map(|p| p.u2tt_example(vocab)).collect::<Result<Vec<_>>>()?;
    let dev_ex = dev.iter().map(|p| p.u2tt_example(vocab)).collect::<Result<Vec<_>>>()?;
    fit_model(&model, vocab, codebook, pretrained_embedding, init_seed, train_ex, &dev_ex, train_config)
}

/// Symbols a model of `direction` may emit: its own side of the vocabulary
/// plus EOS.
pub fn output_mask(vocab: &Vocabulary, direction: Direction) -> Vec<bool> {
    (0..vocab.size() as u32)
        .map(|id| match vocab.symbol(id) {
            Ok(Symbol::Unit(_)) => direction == Direction::TextToUnit,
            Ok(Symbol::Text(_)) => direction == Direction::UnitToText,
            _ => id == EOS || (id == UNK && direction == Direction::UnitToText),
        })
        .collect()
}

/// BT generation cap for a text source of `n` tokens.
pub fn bt_max_len(n: usize) -> usize {
    2 * n + 8
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtOutput {
    pub pairs: Vec<ParallelPair>,
    /// Index into the monolingual input of each pair, increasing.
    pub indices: Vec<usize>,
    /// Generations with no unit symbols, dropped.
    pub dropped_empty: usize,
    /// Generations stopped by the length cap rather than EOS.
    pub truncated: usize,
}

/// Generates one tagged synthetic pair per monolingual sentence.
pub fn generate_bt(
    t2ut: &Parameters,
    vocab: &Vocabulary,
    mono: &[Vec<String>],
    config: &DecodeConfig,
) -> Result<BtOutput> {
    if mono.is_empty() {
        return Err(Error::Empty("no monolingual text to back-translate".into()));
    }
    let sources: Vec<Source> = mono.iter().map(|t| Source::Ids(vocab.text_sequence(t))).collect();
    let mask = output_mask(vocab, Direction::TextToUnit);
    let hyps = decode_batch(t2ut, &sources, config, BOS, EOS, Some(&mask), &|len| {
        bt_max_len(len.saturating_sub(2))
    })?;
    let mut out = BtOutput {
        pairs: Vec::with_capacity(mono.len()),
        indices: Vec::with_capacity(mono.len()),
        dropped_empty: 0,
        truncated: 0,
    };
    for (i, (h, text)) in hyps.into_iter().zip(mono).enumerate() {
        if !h.finished {
            out.truncated += 1;
        }
        let units = vocab.decode_units(&h.tokens)?;
        if units.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        out.pairs.push(ParallelPair {
            units,
            target: text.clone(),
            origin: Origin::Synthetic,
        });
        out.indices.push(i);
    }
    if out.dropped_empty > 0 {
        log::warn!("dropped {} empty back-translations", out.dropped_empty);
    }
    Ok(out)
}

/// Decodes unit-to-text sources into word sequences.
pub fn translate(params: &Parameters, vocab: &Vocabulary, sources: &[Source], config: &DecodeConfig) -> Result<Vec<Vec<String>>> {
    let cap = params.config.max_len;
    let mask = output_mask(vocab, Direction::UnitToText);
    let hyps = decode_batch(params, sources, config, BOS, EOS, Some(&mask), &|_| cap)?;
    hyps.iter().map(|h| vocab.decode_text(&h.tokens)).collect()
}

/// Test BLEU of a unit-to-text model over original pairs (never tagged).
pub fn evaluate_bleu(
    params: &Parameters,
    vocab: &Vocabulary,
    test: &[ParallelPair],
    config: &DecodeConfig,
) -> Result<(BleuScore, Vec<Vec<String>>)> {
    let sources = test
        .iter()
        .map(|p| Ok(Source::Ids(vocab.unit_source(&p.units, false)?)))
        .collect::<Result<Vec<_>>>()?;
    let hyps = translate(params, vocab, &sources, config)?;
    let refs: Vec<Vec<String>> = test.iter().map(|p| p.target.clone()).collect();
    Ok((bleu_tokens(&hyps, &refs)?, hyps))
}

/// Dev-set UER of units generated by the text-to-unit model.
pub fn bt_uer(t2ut: &Parameters, vocab: &Vocabulary, dev: &[ParallelPair], config: &DecodeConfig) -> Result<f64> {
    let texts: Vec<Vec<String>> = dev.iter().map(|p| p.target.clone()).collect();
    let sources: Vec<Source> = texts.iter().map(|t| Source::Ids(vocab.text_sequence(t))).collect();
    let mask = output_mask(vocab, Direction::TextToUnit);
    let hyps = decode_batch(t2ut, &sources, config, BOS, EOS, Some(&mask), &|len| {
        bt_max_len(len.saturating_sub(2))
    })?;
    let hyp_units = hyps
        .iter()
        .map(|h| Ok(vocab.decode_units(&h.tokens)?.units))
        .collect::<Result<Vec<_>>>()?;
    let ref_units: Vec<Vec<u32>> = dev.iter().map(|p| p.units.units.clone()).collect();
    corpus_uer(&hyp_units, &ref_units)
}

/// All data artifacts preceding model training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: WorldSpec,
    pub corpus: CorpusSplit,
    pub codebook: Codebook,
    pub speaker_stats: SpeakerStats,
    pub vocab: Vocabulary,
    pub train: Vec<ParallelPair>,
    pub dev: Vec<ParallelPair>,
    pub test: Vec<ParallelPair>,
    pub skipped: usize,
}

pub fn train_frames(corpus: &CorpusSplit) -> Result<Matrix> {
    Matrix::vstack(corpus.train.iter().map(|u| &u.frames))
}

pub fn speaker_stats(utterances: &[Utterance]) -> Result<SpeakerStats> {
    SpeakerStats::estimate(utterances.iter().map(|u| (u.speaker_id, &u.frames)))
}

/// Fits a codebook on train frames, normalized per speaker when `stats` is given.
pub fn fit_codebook(config: &ExperimentConfig, corpus: &CorpusSplit, stats: Option<&SpeakerStats>) -> Result<Codebook> {
    let frames = match stats {
        None => train_frames(corpus)?,
        Some(s) => {
            let normalized = corpus
                .train
                .iter()
                .map(|u| crate::quantizer::normalize_speaker(&u.frames, u.speaker_id, s))
                .collect::<Result<Vec<_>>>()?;
            Matrix::vstack(normalized.iter())?
        }
    };
    fit_kmeans(&frames, config.quantizer.k, config.quantizer.max_iters, child_seed(config.seed, "kmeans"))
}

/// Vocabulary over parallel-train and monolingual target text.
pub fn build_vocab(config: &ExperimentConfig, corpus: &CorpusSplit) -> Result<Vocabulary> {
    let mut texts: Vec<&[String]> = corpus.train.iter().map(|u| u.target_tokens.as_slice()).collect();
    texts.extend(corpus.monolingual.iter().map(|m| m.target_tokens.as_slice()));
    let owned: Vec<Vec<&str>> = texts.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    learn_vocab(&owned, config.quantizer.k, config.vocab_size())
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let world = build_world(&config.world, child_seed(config.seed, "world"))?;
    let corpus = sample_corpus(&world, &config.corpus, child_seed(config.seed, "corpus"))?;
    let stats = speaker_stats(&corpus.train)?;
    let norm = config.mixture.use_speaker_norm.then_some(&stats);
    let codebook = fit_codebook(config, &corpus, norm)?;
    let vocab = build_vocab(config, &corpus)?;
    let train = prepare_unit_corpus(&codebook, &corpus.train, norm)?;
    let dev = prepare_unit_corpus(&codebook, &corpus.dev, norm)?;
    let test = prepare_unit_corpus(&codebook, &corpus.test, norm)?;
    Ok(Prepared {
        world,
        codebook,
        speaker_stats: stats,
        vocab,
        skipped: train.skipped + dev.skipped + test.skipped,
        train: train.pairs,
        dev: dev.pairs,
        test: test.pairs,
        corpus,
    })
}

/// Per-stage train configuration with the seed drawn from the root stream.
pub fn stage_train_config(config: &ExperimentConfig, stage: &str) -> TrainConfig {
    TrainConfig {
        seed: child_seed(config.seed, &format!("train/{stage}")),
        ..config.train.clone()
    }
}

pub fn stage_seed(config: &ExperimentConfig, stage: &str) -> u64 {
    child_seed(config.seed, stage)
}

pub fn bt_decode_config(config: &ExperimentConfig, method: &DecodeConfig) -> DecodeConfig {
    DecodeConfig {
        seed: child_seed(config.seed, "bt"),
        ..method.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub test_bleu: BleuScore,
    pub training: TrainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub test_pairs: usize,
    pub monolingual: usize,
    pub skipped_utterances: usize,
    pub codebook_k: usize,
    pub kmeans_iterations: usize,
    pub quantization_mse: f64,
    pub vocab_size: usize,
    pub bpe_merges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtSummary {
    pub method: DecodeConfig,
    pub requested: usize,
    pub generated: usize,
    pub dropped_empty: usize,
    pub truncated: usize,
    pub mean_units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bt_amount: usize,
    pub synthetic_pairs: usize,
    pub upsample_rate: usize,
    pub stream_len: usize,
    pub test_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UerRow {
    pub method: String,
    pub dev_uer: f64,
    /// DUB minus baseline test BLEU with this generation method, when trained.
    pub delta_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStudy {
    pub continuous_frames_bleu: f64,
    pub unit_ids_bleu: f64,
    pub pretrained_embedding_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub status: RunStatus,
    /// Stage and message of the first failure.
    pub failure: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub data: Option<DataSummary>,
    pub baseline: Option<ModelResult>,
    pub t2ut: Option<TrainSummary>,
    pub bt: Option<BtSummary>,
    pub dub: Option<ModelResult>,
    pub upsample_rate: Option<usize>,
    pub stream_len: Option<usize>,
    pub delta_bleu: Option<f64>,
    pub curve: Vec<CurvePoint>,
    pub uer_study: Vec<UerRow>,
    pub embedding_study: Option<EmbeddingStudy>,
    /// Wall-clock seconds per stage; excluded from reproducibility checks.
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            status: RunStatus::Complete,
            failure: None,
            config_hash: config.hash(),
            seed: config.seed,
            config: config.canonical(),
            data: None,
            baseline: None,
            t2ut: None,
            bt: None,
            dub: None,
            upsample_rate: None,
            stream_len: None,
            delta_bleu: None,
            curve: Vec::new(),
            uer_study: Vec::new(),
            embedding_study: None,
            timings: BTreeMap::new(),
        }
    }

    /// JSON without the `timings` key, for byte-level comparison.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Markdown summary: headline, per-method UER table, scaling curve.
    pub fn to_markdown(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# DUB experiment (seed {}, config {})\n", self.seed, self.config_hash);
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "**FAILED**: {f}\n");
        }
        let bleu = |m: &Option<ModelResult>| m.as_ref().map_or("n/a".to_string(), |r| format!("{:.2}", r.test_bleu.bleu));
        let _ = writeln!(s, "| System | Test BLEU |\n|---|---|");
        let _ = writeln!(s, "| Baseline U2TT (original pairs) | {} |", bleu(&self.baseline));
        let _ = writeln!(s, "| DUB U2TT (r = {}) | {} |", self.upsample_rate.map_or("n/a".into(), |r| r.to_string()), bleu(&self.dub));
        if let Some(d) = self.delta_bleu {
            let _ = writeln!(s, "\nDelta BLEU: {d:+.2}");
        }
        if !self.uer_study.is_empty() {
            let _ = writeln!(s, "\n## Pseudo-unit quality vs BLEU gain\n\n| BT method | Dev UER (%) | Delta BLEU |\n|---|---|---|");
            for r in &self.uer_study {
                let d = r.delta_bleu.map_or("n/a".to_string(), |d| format!("{d:+.2}"));
                let _ = writeln!(s, "| {} | {:.1} | {} |", r.method, r.dev_uer, d);
            }
        }
        if !self.curve.is_empty() {
            let _ = writeln!(s, "\n## BLEU vs amount of BT data\n\n| Monolingual sentences | r | Stream | Test BLEU |\n|---|---|---|---|");
            for p in &self.curve {
                let _ = writeln!(s, "| {} | {} | {} | {:.2} |", p.bt_amount, p.upsample_rate, p.stream_len, p.test_bleu);
            }
        }
        if let Some(e) = &self.embedding_study {
            let _ = writeln!(
                s,
                "\n## Input representation\n\n| Input | Test BLEU |\n|---|---|\n| Continuous frames | {:.2} |\n| Unit ids | {:.2} |\n| Unit ids + centroid embeddings | {:.2} |",
                e.continuous_frames_bleu, e.unit_ids_bleu, e.pretrained_embedding_bleu
            );
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("bt_amount,synthetic_pairs,upsample_rate,stream_len,test_bleu\n");
        for p in &self.curve {
            s.push_str(&format!(
                "{},{},{},{},{:.4}\n",
                p.bt_amount, p.synthetic_pairs, p.upsample_rate, p.stream_len, p.test_bleu
            ));
        }
        s
    }
}

fn method_label(c: &DecodeConfig) -> String {
    match c.method {
        DecodeMethod::Greedy => "greedy".into(),
        DecodeMethod::Beam => format!("beam-{}", c.beam_size),
        DecodeMethod::Sample => "sampling".into(),
        DecodeMethod::Topk => format!("top-{}", c.k),
    }
}

struct Timer<'a> {
    timings: &'a mut BTreeMap<String, f64>,
}

impl Timer<'_> {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        if let Err(e) = &out {
            log::error!("stage {stage} failed: {e}");
        }
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        log::info!("{stage}: {:.1}s", t.elapsed().as_secs_f64());
        out
    }
}

/// Trained models of a completed run, for callers that persist them.
pub struct Models {
    pub baseline: Parameters,
    pub t2ut: Parameters,
    pub dub: Option<Parameters>,
}

/// Runs every stage; on failure the report so far is returned with
/// `status = failed`.
pub fn run_dub_experiment(config: &ExperimentConfig) -> ExperimentReport {
    run_dub_experiment_with_models(config).0
}

/// Like [`run_dub_experiment`], also handing back the prepared data and
/// trained models, or the error that stopped the run.
pub fn run_dub_experiment_with_models(config: &ExperimentConfig) -> (ExperimentReport, Result<(Prepared, Models)>) {
    let mut report = ExperimentReport::new(config);
    let mut timings = BTreeMap::new();
    let mut stage = String::new();
    let result = run_stages(config, &mut report, &mut timings, &mut stage);
    report.timings = timings;
    if let Err(e) = &result {
        report.status = RunStatus::Failed;
        report.failure = Some(format!("{stage}: {e}"));
    }
    (report, result)
}

fn run_stages(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    timings: &mut BTreeMap<String, f64>,
    stage: &mut String,
) -> Result<(Prepared, Models)> {
    let mut timer = Timer { timings };
    let mut enter = |s: &str| {
        *stage = s.to_string();
    };

    enter("prepare");
    let prep = timer.run("prepare", || prepare(config))?;
    let train_frames = train_frames(&prep.corpus)?;
    report.data = Some(DataSummary {
        train_pairs: prep.train.len(),
        dev_pairs: prep.dev.len(),
        test_pairs: prep.test.len(),
        monolingual: prep.corpus.monolingual.len(),
        skipped_utterances: prep.skipped,
        codebook_k: prep.codebook.k(),
        kmeans_iterations: prep.codebook.fit_objective_trace.len(),
        quantization_mse: if config.mixture.use_speaker_norm {
            let normalized = prep
                .corpus
                .train
                .iter()
                .map(|u| crate::quantizer::normalize_speaker(&u.frames, u.speaker_id, &prep.speaker_stats))
                .collect::<Result<Vec<_>>>()?;
            quantization_mse(&prep.codebook, &Matrix::vstack(normalized.iter())?)?
        } else {
            quantization_mse(&prep.codebook, &train_frames)?
        },
        vocab_size: prep.vocab.size(),
        bpe_merges: prep.vocab.merges().len(),
    });
    let vocab = &prep.vocab;
    let eval = &config.eval_decode;
    let shuffle_seed = stage_seed(config, "shuffle");

    // (a) baseline on original pairs only
    enter("baseline");
    let base_stream = build_mixture(&prep.train, &[], 1, shuffle_seed)?;
    let baseline = timer.run("baseline", || {
        train_u2tt(
            &base_stream,
            &prep.dev,
            vocab,
            Some(&prep.codebook),
            false,
            &config.model,
            &stage_train_config(config, "u2tt"),
            stage_seed(config, "init/u2tt"),
        )
    })?;
    let (base_bleu, _) = timer.run("baseline_eval", || evaluate_bleu(&baseline.params, vocab, &prep.test, eval))?;
    report.baseline = Some(ModelResult {
        test_bleu: base_bleu.clone(),
        training: TrainSummary::from(&baseline),
    });

    // text-to-unit model and one-shot back-translation of the largest amount
    enter("t2ut");
    let t2ut = timer.run("t2ut", || {
        train_t2ut(
            &prep.train,
            &prep.dev,
            vocab,
            &config.model,
            &stage_train_config(config, "t2ut"),
            stage_seed(config, "init/t2ut"),
        )
    })?;
    report.t2ut = Some(TrainSummary::from(&t2ut));

    enter("generate_bt");
    let amount = config.mixture.max_amount();
    let mono: Vec<Vec<String>> = prep.corpus.monolingual[..amount]
        .iter()
        .map(|m| m.target_tokens.clone())
        .collect();
    let bt_cfg = bt_decode_config(config, &config.mixture.bt_method);
    let bt = if amount > 0 {
        timer.run("generate_bt", || generate_bt(&t2ut.params, vocab, &mono, &bt_cfg))?
    } else {
        BtOutput {
            pairs: Vec::new(),
            indices: Vec::new(),
            dropped_empty: 0,
            truncated: 0,
        }
    };
    report.bt = Some(BtSummary {
        method: bt_cfg.clone(),
        requested: amount,
        generated: bt.pairs.len(),
        dropped_empty: bt.dropped_empty,
        truncated: bt.truncated,
        mean_units: if bt.pairs.is_empty() {
            0.0
        } else {
            bt.pairs.iter().map(|p| p.units.len()).sum::<usize>() as f64 / bt.pairs.len() as f64
        },
    });

    // (b) DUB models over the scaling curve; prefixes of one BT run
    let mut amounts = config.mixture.bt_amounts.clone();
    amounts.sort_unstable();
    amounts.dedup();
    let mut dub_params = None;
    for &n in &amounts {
        let name = format!("dub_{n}");
        enter(&name);
        // synthetic pairs produced from the first n monolingual sentences
        let kept = mono_prefix_count(&bt, n);
        let synthetic = &bt.pairs[..kept];
        let r = config
            .mixture
            .upsample_rate
            .unwrap_or_else(|| auto_upsample_rate(prep.train.len(), synthetic.len()));
        let stream = build_mixture(&prep.train, synthetic, r, shuffle_seed)?;
        let outcome = timer.run(&name, || {
            train_u2tt(
                &stream,
                &prep.dev,
                vocab,
                Some(&prep.codebook),
                false,
                &config.model,
                &stage_train_config(config, "u2tt"),
                stage_seed(config, "init/u2tt"),
            )
        })?;
        let (score, _) = timer.run(&format!("{name}_eval"), || evaluate_bleu(&outcome.params, vocab, &prep.test, eval))?;
        report.curve.push(CurvePoint {
            bt_amount: n,
            synthetic_pairs: synthetic.len(),
            upsample_rate: r,
            stream_len: stream.len(),
            test_bleu: score.bleu,
        });
        if n == amount {
            report.upsample_rate = Some(r);
            report.stream_len = Some(stream.len());
            report.delta_bleu = Some(score.bleu - base_bleu.bleu);
            report.dub = Some(ModelResult {
                test_bleu: score,
                training: TrainSummary::from(&outcome),
            });
            dub_params = Some(outcome.params);
        }
    }

    if config.studies.uer_methods {
        enter("uer_study");
        let methods = [
            DecodeConfig::sampling(0),
            DecodeConfig::topk(10, 0),
            DecodeConfig::beam(5),
        ];
        for m in methods {
            let label = method_label(&m);
            let cfg = bt_decode_config(config, &m);
            let u = timer.run(&format!("uer_{label}"), || bt_uer(&t2ut.params, vocab, &prep.dev, &cfg))?;
            let delta = if config.studies.method_bleu {
                if cfg.method == bt_cfg.method && cfg.k == bt_cfg.k && cfg.beam_size == bt_cfg.beam_size {
                    report.delta_bleu
                } else {
                    let gen = timer.run(&format!("bt_{label}"), || generate_bt(&t2ut.params, vocab, &mono, &cfg))?;
                    let r = auto_rate(config, prep.train.len(), gen.pairs.len());
                    let stream = build_mixture(&prep.train, &gen.pairs, r, shuffle_seed)?;
                    let o = timer.run(&format!("dub_{label}"), || {
                        train_u2tt(
                            &stream,
                            &prep.dev,
                            vocab,
                            Some(&prep.codebook),
                            false,
                            &config.model,
                            &stage_train_config(config, "u2tt"),
                            stage_seed(config, "init/u2tt"),
                        )
                    })?;
                    let (score, _) = evaluate_bleu(&o.params, vocab, &prep.test, eval)?;
                    Some(score.bleu - base_bleu.bleu)
                }
            } else if cfg.method == bt_cfg.method {
                report.delta_bleu
            } else {
                None
            };
            report.uer_study.push(UerRow {
                method: label,
                dev_uer: u,
                delta_bleu: delta,
            });
        }
        if config.studies.speaker_norm_uer {
            enter("uer_speaker_norm");
            let u = timer.run("uer_speaker_norm", || speaker_norm_uer(config, &prep, &bt_cfg))?;
            report.uer_study.push(UerRow {
                method: format!("{} + speaker norm", method_label(&bt_cfg)),
                dev_uer: u,
                delta_bleu: None,
            });
        }
    }

    if config.studies.embedding {
        enter("embedding_study");
        let pretrained = timer.run("u2tt_pretrained", || {
            train_u2tt(
                &base_stream,
                &prep.dev,
                vocab,
                Some(&prep.codebook),
                true,
                &config.model,
                &stage_train_config(config, "u2tt"),
                stage_seed(config, "init/u2tt"),
            )
        })?;
        let (pre_bleu, _) = evaluate_bleu(&pretrained.params, vocab, &prep.test, eval)?;
        let frames = timer.run("u2tt_frames", || train_frames_baseline(config, &prep))?;
        let frames_bleu = evaluate_frames_bleu(&frames.params, vocab, &prep.corpus.test, eval)?;
        report.embedding_study = Some(EmbeddingStudy {
            continuous_frames_bleu: frames_bleu.bleu,
            unit_ids_bleu: base_bleu.bleu,
            pretrained_embedding_bleu: pre_bleu.bleu,
        });
    }

    Ok((
        prep,
        Models {
            baseline: baseline.params,
            t2ut: t2ut.params,
            dub: dub_params,
        },
    ))
}

fn auto_rate(config: &ExperimentConfig, original: usize, synthetic: usize) -> usize {
    config
        .mixture
        .upsample_rate
        .unwrap_or_else(|| auto_upsample_rate(original, synthetic))
}

/// How many of `bt.pairs` came from the first `n` monolingual sentences.
fn mono_prefix_count(bt: &BtOutput, n: usize) -> usize {
    bt.indices.partition_point(|&i| i < n)
}

/// Dev UER of a pipeline that normalizes speakers before quantizing, with
/// its own codebook and text-to-unit model.
fn speaker_norm_uer(config: &ExperimentConfig, prep: &Prepared, decode: &DecodeConfig) -> Result<f64> {
    let codebook = fit_codebook(config, &prep.corpus, Some(&prep.speaker_stats))?;
    let train = prepare_unit_corpus(&codebook, &prep.corpus.train, Some(&prep.speaker_stats))?.pairs;
    let dev = prepare_unit_corpus(&codebook, &prep.corpus.dev, Some(&prep.speaker_stats))?.pairs;
    let t2ut = train_t2ut(
        &train,
        &dev,
        &prep.vocab,
        &config.model,
        &stage_train_config(config, "t2ut"),
        stage_seed(config, "init/t2ut"),
    )?;
    bt_uer(&t2ut.params, &prep.vocab, &dev, decode)
}

fn frames_example(u: &Utterance, vocab: &Vocabulary) -> Example {
    Example {
        source: Source::Frames(u.frames.clone()),
        target: vocab.text_sequence(&u.target_tokens),
    }
}

/// Unit-to-text model reading raw frames through a learned projection.
pub fn train_frames_baseline(config: &ExperimentConfig, prep: &Prepared) -> Result<TrainOutcome> {
    let model = ModelConfig {
        direction: Direction::UnitToText,
        input_mode: InputMode::ContinuousFrames,
        ..config.model.clone()
    };
    let train_ex = prep.corpus.train.iter().map(|u| frames_example(u, &prep.vocab)).collect();
    let dev_ex: Vec<Example> = prep.corpus.dev.iter().map(|u| frames_example(u, &prep.vocab)).collect();
    fit_model(
        &model,
        &prep.vocab,
        Some(&prep.codebook),
        false,
        stage_seed(config, "init/frames"),
        train_ex,
        &dev_ex,
        &stage_train_config(config, "u2tt"),
    )
}

pub fn evaluate_frames_bleu(
    params: &Parameters,
    vocab: &Vocabulary,
    test: &[Utterance],
    config: &DecodeConfig,
) -> Result<BleuScore> {
    let sources: Vec<Source> = test.iter().map(|u| Source::Frames(u.frames.clone())).collect();
    let hyps = translate(params, vocab, &sources, config)?;
    let refs: Vec<Vec<String>> = test.iter().map(|u| u.target_tokens.clone()).collect();
    bleu_tokens(&hyps, &refs)
}
