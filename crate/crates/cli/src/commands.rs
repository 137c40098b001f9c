use std::path::{Path, PathBuf};

use serde::Serialize;

use dub_core::config::ExperimentConfig;
use dub_core::decode::{DecodeConfig, DecodeMethod};
use dub_core::dub::{
    self, auto_upsample_rate, build_mixture, bt_decode_config, evaluate_bleu, fit_codebook, prepare_unit_corpus,
    run_dub_experiment_with_models, stage_seed, stage_train_config, ExperimentReport, ParallelPair, Prepared,
    TrainSummary,
};
use dub_core::io::{read_artifact, read_json, read_jsonl, write_artifact, write_atomic, write_jsonl, Provenance};
use dub_core::metrics::{bleu, corpus_uer, MetricsReport};
use dub_core::model::{load_checkpoint, save_checkpoint, Checkpoint, TrainOutcome};
use dub_core::quantizer::SpeakerStats;
use dub_core::rng::child_seed;
use dub_core::world::CorpusSplit;
use dub_core::{build_world, sample_corpus, Codebook, Error, Parameters, Result, Utterance, Vocabulary, WorldSpec};

use crate::artifacts::{
    BtManifest, Layout, MonoRecord, PairRecord, TrainManifest, UtteranceRecord,
};
use crate::{EvaluateArgs, GenerateBtArgs, GlobalArgs, MethodArg, MetricArg, SplitArg, TrainU2ttArgs};

const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub struct Context {
    pub config: ExperimentConfig,
    pub layout: Layout,
    pub provenance: Provenance,
    explicit_config: bool,
}

impl Context {
    pub fn new(args: &GlobalArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(steps) = args.steps {
            config.train.max_steps = steps;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        config.validate()?;
        let root = args
            .outdir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            provenance: Provenance {
                config_hash: config.hash(),
                seed: config.seed,
            },
            layout: Layout::new(root),
            explicit_config: args.config.is_some() || args.seed.is_some() || args.steps.is_some(),
            config,
        })
    }

    fn world(&self) -> Result<WorldSpec> {
        Ok(read_artifact(&self.layout.world(), Some(&self.provenance))?.data)
    }

    fn utterances(&self, split: &str, frame_dim: usize) -> Result<Vec<Utterance>> {
        let (_, recs) = read_jsonl::<UtteranceRecord>(&self.layout.split(split), Some(&self.provenance))?;
        recs.into_iter().map(|r| r.into_utterance(frame_dim)).collect()
    }

    fn mono(&self) -> Result<Vec<Vec<String>>> {
        let (_, recs) = read_jsonl::<MonoRecord>(&self.layout.split("mono"), Some(&self.provenance))?;
        Ok(recs.into_iter().map(|r| r.tgt).collect())
    }

    fn pairs(&self, path: &Path) -> Result<Vec<PairRecord>> {
        Ok(read_jsonl(path, Some(&self.provenance))?.1)
    }

    fn unit_pairs(&self, split: &str) -> Result<Vec<ParallelPair>> {
        Ok(self
            .pairs(&self.layout.units(split))?
            .into_iter()
            .map(PairRecord::into_pair)
            .collect())
    }

    fn codebook(&self) -> Result<Codebook> {
        Ok(read_artifact(&self.layout.codebook(), Some(&self.provenance))?.data)
    }

    fn vocab(&self) -> Result<Vocabulary> {
        Ok(read_artifact(&self.layout.vocab(), Some(&self.provenance))?.data)
    }

    fn checkpoint(&self, path: &Path, vocab: &Vocabulary) -> Result<Parameters> {
        let ckpt = load_checkpoint(path)?;
        self.provenance.check(
            path,
            &Provenance {
                config_hash: ckpt.config_hash.clone(),
                seed: ckpt.seed,
            },
        )?;
        if ckpt.vocab_hash != vocab.content_hash() {
            return Err(Error::Provenance {
                path: path.to_path_buf(),
                expected: format!("vocabulary {}", vocab.content_hash()),
                found: format!("vocabulary {}", ckpt.vocab_hash),
            });
        }
        Ok(ckpt.params)
    }

    fn save_model(&self, name: &str, params: &Parameters, vocab: &Vocabulary, step: usize) -> Result<PathBuf> {
        let path = self.layout.ckpt(name);
        save_checkpoint(
            &path,
            &Checkpoint {
                params: params.clone(),
                vocab_hash: vocab.content_hash(),
                config_hash: self.provenance.config_hash.clone(),
                seed: self.provenance.seed,
                step,
            },
        )?;
        Ok(path)
    }

    fn write<T: Serialize>(&self, path: &Path, data: &T) -> Result<()> {
        write_artifact(path, &self.provenance, data)
    }
}

fn write_corpus(ctx: &Context, corpus: &CorpusSplit) -> Result<()> {
    for (name, utts) in SPLITS.iter().zip([&corpus.train, &corpus.dev, &corpus.test]) {
        let recs: Vec<UtteranceRecord> = utts.iter().map(UtteranceRecord::from).collect();
        write_jsonl(&ctx.layout.split(name), &ctx.provenance, &recs)?;
    }
    let mono: Vec<MonoRecord> = corpus
        .monolingual
        .iter()
        .map(|m| MonoRecord {
            tgt: m.target_tokens.clone(),
        })
        .collect();
    write_jsonl(&ctx.layout.split("mono"), &ctx.provenance, &mono)
}

fn write_units(ctx: &Context, split: &str, pairs: &[ParallelPair]) -> Result<()> {
    let recs: Vec<PairRecord> = pairs.iter().map(|p| PairRecord::new(p, None)).collect();
    write_jsonl(&ctx.layout.units(split), &ctx.provenance, &recs)
}

pub fn gen_world(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let world = build_world(&cfg.world, child_seed(cfg.seed, "world"))?;
    let corpus = sample_corpus(&world, &cfg.corpus, child_seed(cfg.seed, "corpus"))?;
    ctx.write(&ctx.layout.world(), &world)?;
    write_corpus(ctx, &corpus)?;
    println!(
        "world: {} words, {} speakers; corpus: {} train, {} dev, {} test, {} monolingual",
        world.lexicon.len(),
        world.speaker_count(),
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        corpus.monolingual.len()
    );
    Ok(())
}

pub fn extract_units(ctx: &Context) -> Result<()> {
    let world = ctx.world()?;
    let dim = world.config.frame_dim;
    let corpus = CorpusSplit {
        train: ctx.utterances("train", dim)?,
        dev: ctx.utterances("dev", dim)?,
        test: ctx.utterances("test", dim)?,
        monolingual: Vec::new(),
    };
    let stats = dub::speaker_stats(&corpus.train)?;
    let norm = ctx.config.mixture.use_speaker_norm.then_some(&stats);
    let codebook = fit_codebook(&ctx.config, &corpus, norm)?;
    ctx.write(&ctx.layout.codebook(), &codebook)?;
    ctx.write(&ctx.layout.speaker_stats(), &stats)?;
    for (name, utts) in SPLITS.iter().zip([&corpus.train, &corpus.dev, &corpus.test]) {
        let prepared = prepare_unit_corpus(&codebook, utts, norm)?;
        write_units(ctx, name, &prepared.pairs)?;
    }
    println!(
        "codebook: K = {}, {} iterations, final objective {:.4}",
        codebook.k(),
        codebook.fit_objective_trace.len(),
        codebook.fit_objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn learn_vocab(ctx: &Context) -> Result<()> {
    let dim = ctx.world()?.config.frame_dim;
    let corpus = CorpusSplit {
        train: ctx.utterances("train", dim)?,
        dev: Vec::new(),
        test: Vec::new(),
        monolingual: ctx
            .mono()?
            .into_iter()
            .map(|tgt| MonoRecord { tgt }.into_sentence())
            .collect(),
    };
    let vocab = dub::build_vocab(&ctx.config, &corpus)?;
    ctx.write(&ctx.layout.vocab(), &vocab)?;
    println!("vocabulary: {} entries, {} merges", vocab.size(), vocab.merges().len());
    Ok(())
}

fn write_train_manifest(ctx: &Context, name: &str, manifest: &TrainManifest) -> Result<()> {
    ctx.write(&ctx.layout.train_log(name), manifest)
}

fn report_training(name: &str, path: &Path, o: &TrainOutcome) {
    println!(
        "{name}: {} steps, best dev nll {:.4} at step {}, averaged {:.4} -> {}",
        o.steps,
        o.best_dev_nll,
        o.best_step,
        o.final_dev_nll,
        path.display()
    );
}

pub fn train_t2ut(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let vocab = ctx.vocab()?;
    let train = ctx.unit_pairs("train")?;
    let dev = ctx.unit_pairs("dev")?;
    let outcome = dub::train_t2ut(
        &train,
        &dev,
        &vocab,
        &cfg.model,
        &stage_train_config(cfg, "t2ut"),
        stage_seed(cfg, "init/t2ut"),
    )?;
    let path = ctx.save_model("t2ut", &outcome.params, &vocab, outcome.best_step)?;
    write_train_manifest(
        ctx,
        "t2ut",
        &TrainManifest {
            stage: "t2ut".into(),
            pretrained_embedding: false,
            bt_amount: 0,
            synthetic_pairs: 0,
            upsample_rate: 1,
            stream_len: train.len(),
            summary: TrainSummary::from(&outcome),
            log: outcome.log.clone(),
        },
    )?;
    report_training("t2ut", &path, &outcome);
    Ok(())
}

pub fn train_u2tt(ctx: &Context, args: &TrainU2ttArgs) -> Result<()> {
    let cfg = &ctx.config;
    let vocab = ctx.vocab()?;
    let codebook = ctx.codebook()?;
    let train = ctx.unit_pairs("train")?;
    let dev = ctx.unit_pairs("dev")?;
    let (synthetic, amount) = if args.with_bt {
        let amount = args.amount.unwrap_or(usize::MAX);
        let syn: Vec<ParallelPair> = ctx
            .pairs(&ctx.layout.bt())?
            .into_iter()
            .filter(|r| r.index.is_some_and(|i| i < amount))
            .map(PairRecord::into_pair)
            .collect();
        let requested = read_artifact::<BtManifest>(&ctx.layout.bt_manifest(), Some(&ctx.provenance))?
            .data
            .requested;
        (syn, amount.min(requested))
    } else {
        (Vec::new(), 0)
    };
    let r = args
        .upsample_rate
        .or(cfg.mixture.upsample_rate)
        .unwrap_or_else(|| auto_upsample_rate(train.len(), synthetic.len()));
    let stream = build_mixture(&train, &synthetic, r, stage_seed(cfg, "shuffle"))?;
    let outcome = dub::train_u2tt(
        &stream,
        &dev,
        &vocab,
        Some(&codebook),
        args.pretrained_embedding,
        &cfg.model,
        &stage_train_config(cfg, "u2tt"),
        stage_seed(cfg, "init/u2tt"),
    )?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| if args.with_bt { "dub" } else { "baseline" }.to_string());
    let path = ctx.save_model(&name, &outcome.params, &vocab, outcome.best_step)?;
    write_train_manifest(
        ctx,
        &name,
        &TrainManifest {
            stage: "u2tt".into(),
            pretrained_embedding: args.pretrained_embedding,
            bt_amount: amount,
            synthetic_pairs: synthetic.len(),
            upsample_rate: r,
            stream_len: stream.len(),
            summary: TrainSummary::from(&outcome),
            log: outcome.log.clone(),
        },
    )?;
    report_training(&name, &path, &outcome);
    Ok(())
}

fn bt_method(ctx: &Context, args: &GenerateBtArgs) -> DecodeConfig {
    let mut m = ctx.config.mixture.bt_method.clone();
    if let Some(method) = args.method {
        m.method = match method {
            MethodArg::Greedy => DecodeMethod::Greedy,
            MethodArg::Beam => DecodeMethod::Beam,
            MethodArg::Sample => DecodeMethod::Sample,
            MethodArg::Topk => DecodeMethod::Topk,
        };
    }
    if let Some(k) = args.k {
        m.k = k;
    }
    if let Some(b) = args.beam_size {
        m.beam_size = b;
    }
    bt_decode_config(&ctx.config, &m)
}

pub fn generate_bt(ctx: &Context, args: &GenerateBtArgs) -> Result<()> {
    let vocab = ctx.vocab()?;
    let method = bt_method(ctx, args);
    method.validate(vocab.size())?;
    let ckpt_path = args.checkpoint.clone().unwrap_or_else(|| ctx.layout.ckpt("t2ut"));
    let t2ut = ctx.checkpoint(&ckpt_path, &vocab)?;
    let mut mono = ctx.mono()?;
    let amount = args.amount.unwrap_or_else(|| ctx.config.mixture.max_amount());
    if amount > mono.len() {
        return Err(Error::Config(format!(
            "amount {amount} exceeds the {} monolingual sentences",
            mono.len()
        )));
    }
    mono.truncate(amount);
    let out = dub::generate_bt(&t2ut, &vocab, &mono, &method)?;
    let recs: Vec<PairRecord> = out
        .pairs
        .iter()
        .zip(&out.indices)
        .map(|(p, &i)| PairRecord::new(p, Some(i)))
        .collect();
    write_jsonl(&ctx.layout.bt(), &ctx.provenance, &recs)?;
    let manifest = BtManifest {
        method: method.method,
        k: method.k,
        beam_size: method.beam_size,
        decode_seed: method.seed,
        checkpoint: ckpt_path,
        requested: amount,
        generated: out.pairs.len(),
        dropped_empty: out.dropped_empty,
        truncated: out.truncated,
    };
    ctx.write(&ctx.layout.bt_manifest(), &manifest)?;
    println!(
        "back-translated {} of {} sentences ({} empty, {} truncated)",
        manifest.generated, amount, manifest.dropped_empty, manifest.truncated
    );
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn parse_units(path: &Path, lines: &[String]) -> Result<Vec<Vec<u32>>> {
    lines
        .iter()
        .enumerate()
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<u32>()
                        .map_err(|_| Error::schema(path, format!("line {}: `{t}` is not a unit index", n + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    if let (Some(h), Some(r)) = (&args.hyp, &args.reference) {
        let hyps = read_lines(h)?;
        let refs = read_lines(r)?;
        match args.metric {
            MetricArg::Bleu => {
                let s = bleu(&hyps, &refs)?;
                println!(
                    "BLEU = {:.2} ({:.1}/{:.1}/{:.1}/{:.1}, BP = {:.3}, hyp_len = {}, ref_len = {})",
                    s.bleu,
                    s.precisions[0],
                    s.precisions[1],
                    s.precisions[2],
                    s.precisions[3],
                    s.brevity_penalty,
                    s.hyp_len,
                    s.ref_len
                );
            }
            MetricArg::Uer => {
                let u = corpus_uer(&parse_units(h, &hyps)?, &parse_units(r, &refs)?)?;
                println!("UER = {u:.2}");
            }
        }
        return Ok(());
    }
    let path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs --hyp/--ref or --checkpoint".into()))?;
    let vocab = ctx.vocab()?;
    let params = ctx.checkpoint(path, &vocab)?;
    let split = match args.split {
        SplitArg::Dev => "dev",
        SplitArg::Test => "test",
    };
    let pairs = ctx.unit_pairs(split)?;
    let (score, hyps) = evaluate_bleu(&params, &vocab, &pairs, &ctx.config.eval_decode)?;
    if let Some(out) = &args.hyp_out {
        let text: String = hyps.iter().map(|h| h.join(" ") + "\n").collect();
        write_atomic(out, text.as_bytes())?;
    }
    let report = MetricsReport {
        bleu: Some(score),
        ..Default::default()
    };
    println!("{}", dub_core::io::to_json_pretty(&report)?);
    Ok(())
}

fn write_report_files(ctx: &Context, report: &ExperimentReport) -> Result<()> {
    write_atomic(&ctx.layout.report_md(), report.to_markdown().as_bytes())?;
    write_atomic(&ctx.layout.curve_csv(), report.curve_csv().as_bytes())
}

fn write_prepared(ctx: &Context, prep: &Prepared) -> Result<()> {
    ctx.write(&ctx.layout.world(), &prep.world)?;
    write_corpus(ctx, &prep.corpus)?;
    ctx.write(&ctx.layout.codebook(), &prep.codebook)?;
    ctx.write::<SpeakerStats>(&ctx.layout.speaker_stats(), &prep.speaker_stats)?;
    ctx.write(&ctx.layout.vocab(), &prep.vocab)?;
    write_units(ctx, "train", &prep.train)?;
    write_units(ctx, "dev", &prep.dev)?;
    write_units(ctx, "test", &prep.test)
}

pub fn dub_run(ctx: &Context) -> Result<()> {
    let (report, result) = run_dub_experiment_with_models(&ctx.config);
    if let Ok((prep, models)) = &result {
        write_prepared(ctx, prep)?;
        let best = |r: &Option<dub::ModelResult>| r.as_ref().map_or(0, |m| m.training.best_step);
        ctx.save_model("baseline", &models.baseline, &prep.vocab, best(&report.baseline))?;
        ctx.save_model("t2ut", &models.t2ut, &prep.vocab, report.t2ut.as_ref().map_or(0, |t| t.best_step))?;
        if let Some(d) = &models.dub {
            ctx.save_model("dub", d, &prep.vocab, best(&report.dub))?;
        }
    }
    write_atomic(&ctx.layout.report_json(), dub_core::io::to_json_pretty(&report)?.as_bytes())?;
    write_report_files(ctx, &report)?;
    result?;
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn report(ctx: &Context) -> Result<()> {
    let path = ctx.layout.report_json();
    let report: ExperimentReport = read_json(&path)?;
    if ctx.explicit_config {
        ctx.provenance.check(
            &path,
            &Provenance {
                config_hash: report.config_hash.clone(),
                seed: report.seed,
            },
        )?;
    }
    write_report_files(ctx, &report)?;
    print!("{}", report.to_markdown());
    Ok(())
}
