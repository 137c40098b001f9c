use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dub_core::config::ExperimentConfig;
use dub_core::decode::{DecodeConfig, DecodeMethod};
use dub_core::dub::{prepare, train_frames, translate, Prepared};
use dub_core::metrics::{bleu_tokens, corpus_uer};
use dub_core::model::{loss_and_grad, Example, Source};
use dub_core::{fit_kmeans, init_model, Parameters};

fn setup() -> (ExperimentConfig, Prepared, Parameters) {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.mono = 100;
    cfg.mixture.bt_amounts = vec![100];
    let prep = prepare(&cfg).expect("prepare");
    let params = init_model(&cfg.model, &prep.vocab, Some(&prep.codebook), false, 7).expect("init");
    (cfg, prep, params)
}

fn batch(prep: &Prepared, tokens: usize) -> Vec<Example> {
    let mut out = Vec::new();
    let mut used = 0;
    for p in &prep.train {
        let ex = p.u2tt_example(&prep.vocab).expect("example");
        used += ex.source.len() + ex.target.len();
        if used > tokens {
            break;
        }
        out.push(ex);
    }
    out
}

fn benches(c: &mut Criterion) {
    let (cfg, prep, params) = setup();

    let frames = train_frames(&prep.corpus).expect("frames");
    c.bench_function("kmeans_k32", |b| {
        b.iter(|| fit_kmeans(black_box(&frames), cfg.quantizer.k, 20, 3).expect("fit"))
    });

    let examples = batch(&prep, cfg.train.batch_tokens);
    c.bench_function("train_step_512_tokens", |b| {
        b.iter(|| loss_and_grad(black_box(&params), &examples, None).expect("grad"))
    });

    let sources: Vec<Source> = prep.test[..8]
        .iter()
        .map(|p| Source::Ids(prep.vocab.unit_source(&p.units, false).expect("units")))
        .collect();
    for (name, dc) in [
        ("decode_greedy_8", DecodeConfig { method: DecodeMethod::Greedy, ..Default::default() }),
        ("decode_beam5_8", DecodeConfig::beam(5)),
        ("decode_sample_8", DecodeConfig::sampling(1)),
    ] {
        c.bench_function(name, |b| b.iter(|| translate(&params, &prep.vocab, black_box(&sources), &dc).expect("decode")));
    }

    let refs: Vec<Vec<String>> = prep.test.iter().map(|p| p.target.clone()).collect();
    let hyps: Vec<Vec<String>> = refs.iter().map(|r| r.iter().rev().cloned().collect()).collect();
    c.bench_function("bleu_200_sentences", |b| b.iter(|| bleu_tokens(black_box(&hyps), &refs).expect("bleu")));

    let units: Vec<Vec<u32>> = prep.test.iter().map(|p| p.units.units.clone()).collect();
    let shifted: Vec<Vec<u32>> = units.iter().map(|u| u.iter().skip(1).copied().collect()).collect();
    c.bench_function("uer_200_sequences", |b| b.iter(|| corpus_uer(black_box(&shifted), &units).expect("uer")));
}

criterion_group! {
    name = pipeline;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(pipeline);
