//! Corpus BLEU, unit error rate and quantization error.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::quantizer::Codebook;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Smoothed n-gram precisions in percent, n = 1..4.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// Everything the `evaluate` command can report; absent metrics are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<BleuScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uer_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantization_mse: Option<f64>,
}

pub fn whitespace_tokenize(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Case-sensitive corpus BLEU over whitespace tokens.
pub fn bleu<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<BleuScore> {
    bleu_with(hypotheses, references, whitespace_tokenize)
}

/// Corpus BLEU with a caller-supplied tokenizer.
pub fn bleu_with<S, F>(hypotheses: &[S], references: &[S], tokenize: F) -> Result<BleuScore>
where
    S: AsRef<str>,
    F: for<'a> Fn(&'a str) -> Vec<&'a str>,
{
    let hyps: Vec<Vec<&str>> = hypotheses.iter().map(|h| tokenize(h.as_ref())).collect();
    let refs: Vec<Vec<&str>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    bleu_tokens(&hyps, &refs)
}

fn ngram_counts<T: AsRef<str>>(toks: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU over pre-tokenized sentences, exponential smoothing for
/// zero-match orders and the standard brevity penalty.
pub fn bleu_tokens<T: AsRef<str>>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuScore> {
    if hypotheses.is_empty() {
        return Err(Error::Metric("empty corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Metric(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let mut hyp_len = 0;
    let mut ref_len = 0;
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    let mut precisions = [0.0; MAX_ORDER];
    let mut smooth = 1.0;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            break;
        }
        if matches[n] == 0 {
            smooth *= 2.0;
            precisions[n] = 100.0 / (smooth * totals[n] as f64);
        } else {
            precisions[n] = 100.0 * matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let mean_log = precisions.iter().map(|p| (p / 100.0).ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    } else {
        0.0
    };
    Ok(BleuScore {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Levenshtein distance with unit insert, delete and substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Unit error rate in percent; may exceed 100.
pub fn uer(hyp: &[u32], reference: &[u32]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("UER needs a nonempty reference".into()));
    }
    Ok(100.0 * edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Corpus UER: total edit distance over total reference length, in percent.
pub fn corpus_uer<H: AsRef<[u32]>, R: AsRef<[u32]>>(hyps: &[H], refs: &[R]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Metric(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let total: usize = refs.iter().map(|r| r.as_ref().len()).sum();
    if total == 0 {
        return Err(Error::Metric("UER needs a nonempty reference".into()));
    }
    let dist: usize = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| edit_distance(h.as_ref(), r.as_ref()))
        .sum();
    Ok(100.0 * dist as f64 / total as f64)
}

/// Mean squared distance from each frame to its nearest centroid.
pub fn quantization_mse(codebook: &Codebook, frames: &Matrix) -> Result<f64> {
    if frames.rows() == 0 {
        return Err(Error::Empty("no frames to quantize".into()));
    }
    let mut total = 0.0;
    for f in frames.iter_rows() {
        let k = codebook.assign(f)? as usize;
        total += squared_distance(f, codebook.centroid(k));
    }
    Ok(total / frames.rows() as f64)
}
