//! Synthetic speech/translation world.
//!
//! A world fixes a phoneme inventory (prototype vectors in frame space), a
//! source lexicon of phoneme strings, a word-level translation table into a
//! target language with a fixed local reordering rule, and a set of speakers
//! that shift every frame by a constant offset. Utterances are rendered by
//! repeating noisy prototype frames for a sampled duration per phoneme.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::{self, StreamRng};

const MAX_PROTOTYPE_RETRIES: usize = 10_000;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reordering {
    Identity,
    /// Word groups (w1 w2)(w3 w4)... are emitted as w2 w1 w4 w3 ...; a trailing
    /// odd word stays in place.
    SwapAdjacentPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub phoneme_count: usize,
    pub frame_dim: usize,
    pub lexicon_size: usize,
    /// Inclusive bounds on phonemes per source word.
    pub phonemes_per_word: [usize; 2],
    /// Inclusive bounds on frames per phoneme.
    pub duration_range: [usize; 2],
    pub noise_sigma: f64,
    pub speaker_count: usize,
    pub speaker_offset_norm: f64,
    pub target_vocab_size: usize,
    /// Inclusive bounds on target tokens per source word.
    pub tokens_per_word: [usize; 2],
    /// Inclusive bounds on words per sampled sentence.
    pub sentence_length: [usize; 2],
    pub reordering: Reordering,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            phoneme_count: 25,
            frame_dim: 8,
            lexicon_size: 40,
            phonemes_per_word: [2, 4],
            duration_range: [2, 5],
            noise_sigma: 0.1,
            speaker_count: 4,
            speaker_offset_norm: 0.5,
            target_vocab_size: 60,
            tokens_per_word: [1, 2],
            sentence_length: [3, 6],
            reordering: Reordering::SwapAdjacentPairs,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world: {m}")));
        if self.phoneme_count < 2 {
            return bad("phoneme_count must be >= 2");
        }
        if self.frame_dim < 2 {
            return bad("frame_dim must be >= 2");
        }
        if self.lexicon_size < 2 {
            return bad("lexicon_size must be >= 2");
        }
        let [lo, hi] = self.duration_range;
        if lo < 1 || hi < lo {
            return bad("duration_range must satisfy hi >= lo >= 1");
        }
        let [lo, hi] = self.phonemes_per_word;
        if lo < 1 || hi < lo {
            return bad("phonemes_per_word must satisfy hi >= lo >= 1");
        }
        let [lo, hi] = self.tokens_per_word;
        if lo < 1 || hi < lo {
            return bad("tokens_per_word must satisfy hi >= lo >= 1");
        }
        let [lo, hi] = self.sentence_length;
        if lo < 1 || hi < lo {
            return bad("sentence_length must satisfy hi >= lo >= 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and nonnegative");
        }
        if !(self.speaker_offset_norm >= 0.0 && self.speaker_offset_norm.is_finite()) {
            return bad("speaker_offset_norm must be finite and nonnegative");
        }
        if self.speaker_count < 1 {
            return bad("speaker_count must be >= 1");
        }
        if self.target_vocab_size < 1 {
            return bad("target_vocab_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub phonemes: Vec<usize>,
    pub translation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub config: WorldConfig,
    pub seed: u64,
    /// `phoneme_count x frame_dim`.
    pub prototypes: Matrix,
    pub lexicon: Vec<LexiconEntry>,
    /// One offset row per speaker, `speaker_count x frame_dim`.
    pub speakers: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    /// `T x frame_dim`, the stand-in for the speech signal.
    pub frames: Matrix,
    pub speaker_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoSentence {
    /// Kept only so data hygiene can be verified; never fed to a model.
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub mono: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        Self {
            train: 300,
            dev: 100,
            test: 200,
            mono: 10_000,
        }
    }
}

impl CorpusSizes {
    pub fn parallel(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub monolingual: Vec<MonoSentence>,
}

pub fn build_world(config: &WorldConfig, seed: u64) -> Result<WorldSpec> {
    config.validate()?;
    let mut rng = rng::stream(seed, "world");
    let prototypes = draw_prototypes(config, &mut rng)?;
    let lexicon = draw_lexicon(config, &mut rng)?;
    let speakers = draw_speakers(config, &mut rng);
    Ok(WorldSpec {
        config: config.clone(),
        seed,
        prototypes,
        lexicon,
        speakers,
    })
}

fn draw_prototypes(config: &WorldConfig, rng: &mut StreamRng) -> Result<Matrix> {
    let d = config.frame_dim;
    let min_sq = (4.0 * config.noise_sigma).powi(2);
    let mut protos = Matrix::zeros(0, d);
    for p in 0..config.phoneme_count {
        let mut accepted = false;
        for _ in 0..MAX_PROTOTYPE_RETRIES {
            let cand: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let ok = protos.iter_rows().all(|r| {
                let dist = squared_distance(r, &cand);
                dist > 0.0 && dist >= min_sq
            });
            if ok {
                protos.push_row(&cand)?;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Generation(format!(
                "could not place prototype {p} at distance >= {} from the others",
                4.0 * config.noise_sigma
            )));
        }
    }
    Ok(protos)
}

fn draw_lexicon(config: &WorldConfig, rng: &mut StreamRng) -> Result<Vec<LexiconEntry>> {
    let n = config.lexicon_size;

    let mut pronunciations: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while pronunciations.len() < n {
        attempts += 1;
        if attempts > 1000 * n {
            return Err(Error::Generation(
                "not enough distinct pronunciations for the lexicon".into(),
            ));
        }
        let len = rng.random_range(config.phonemes_per_word[0]..=config.phonemes_per_word[1]);
        let pron: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..config.phoneme_count))
            .collect();
        if seen.insert(pron.clone()) {
            pronunciations.push(pron);
        }
    }

    let inventory = draw_target_inventory(config.target_vocab_size, rng)?;
    let mut order: Vec<usize> = (0..inventory.len()).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut translations: Vec<Vec<String>> = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    attempts = 0;
    while translations.len() < n {
        attempts += 1;
        if attempts > 1000 * n {
            return Err(Error::Generation(
                "not enough distinct translations for the lexicon".into(),
            ));
        }
        let len = rng.random_range(config.tokens_per_word[0]..=config.tokens_per_word[1]);
        let tokens: Vec<String> = (0..len)
            .map(|_| {
                // Walk a shuffled inventory so that every target token gets used
                // before any repeats.
                if cursor == order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                cursor += 1;
                inventory[order[cursor - 1]].clone()
            })
            .collect();
        if seen.insert(tokens.clone()) {
            translations.push(tokens);
        }
    }

    Ok(pronunciations
        .into_iter()
        .zip(translations)
        .enumerate()
        .map(|(i, (phonemes, translation))| LexiconEntry {
            word: format!("w{i:02}"),
            phonemes,
            translation,
        })
        .collect())
}

fn draw_target_inventory(size: usize, rng: &mut StreamRng) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(size);
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while out.len() < size {
        attempts += 1;
        if attempts > 1000 * size {
            return Err(Error::Generation("target inventory exhausted".into()));
        }
        let syllables = rng.random_range(1..=3);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            word.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    Ok(out)
}

/// Offsets come in antipodal pairs so they average to zero; with an odd
/// speaker count the last speaker is the canonical (zero-offset) voice.
fn draw_speakers(config: &WorldConfig, rng: &mut StreamRng) -> Matrix {
    let d = config.frame_dim;
    let mut speakers = Matrix::zeros(config.speaker_count, d);
    for pair in 0..config.speaker_count / 2 {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for v in &mut dir {
            *v *= config.speaker_offset_norm / norm;
        }
        speakers.row_mut(2 * pair).copy_from_slice(&dir);
        for (o, v) in speakers.row_mut(2 * pair + 1).iter_mut().zip(&dir) {
            *o = -v;
        }
    }
    speakers
}

impl WorldSpec {
    pub fn entry(&self, word: &str) -> Result<&LexiconEntry> {
        self.lexicon
            .iter()
            .find(|e| e.word == word)
            .ok_or_else(|| Error::Lexicon(word.to_string()))
    }

    pub fn speaker_count(&self) -> usize {
        self.speakers.rows()
    }

    /// Phoneme index sequence of a sentence, before any duration expansion.
    pub fn phonemes_of(&self, source_tokens: &[String]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for w in source_tokens {
            out.extend_from_slice(&self.entry(w)?.phonemes);
        }
        Ok(out)
    }

    /// Distinct target-side tokens in lexicon order.
    pub fn target_tokens(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.lexicon
            .iter()
            .flat_map(|e| e.translation.iter())
            .filter(|t| seen.insert(t.as_str()))
            .cloned()
            .collect()
    }
}

pub fn translate_oracle(world: &WorldSpec, source_tokens: &[String]) -> Result<Vec<String>> {
    let mapped = source_tokens
        .iter()
        .map(|w| world.entry(w).map(|e| e.translation.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    match world.config.reordering {
        Reordering::Identity => mapped.iter().for_each(|t| out.extend_from_slice(t)),
        Reordering::SwapAdjacentPairs => {
            for pair in mapped.chunks(2) {
                for t in pair.iter().rev() {
                    out.extend_from_slice(t);
                }
            }
        }
    }
    Ok(out)
}

pub fn synthesize_utterance(
    world: &WorldSpec,
    source_tokens: &[String],
    speaker_id: usize,
    seed: u64,
) -> Result<Utterance> {
    if speaker_id >= world.speaker_count() {
        return Err(Error::Index {
            index: speaker_id,
            bound: world.speaker_count(),
        });
    }
    let phonemes = world.phonemes_of(source_tokens)?;
    let target_tokens = translate_oracle(world, source_tokens)?;
    let mut rng = rng::stream(seed, "utterance");
    let [lo, hi] = world.config.duration_range;
    let sigma = world.config.noise_sigma;
    let d = world.config.frame_dim;
    let offset = world.speakers.row(speaker_id);

    let mut frames = Matrix::zeros(0, d);
    let mut row = vec![0.0; d];
    for &p in &phonemes {
        let duration = rng.random_range(lo..=hi);
        let proto = world.prototypes.row(p);
        for _ in 0..duration {
            for j in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                row[j] = proto[j] + offset[j] + sigma * noise;
            }
            frames.push_row(&row)?;
        }
    }
    Ok(Utterance {
        source_tokens: source_tokens.to_vec(),
        target_tokens,
        frames,
        speaker_id,
    })
}

/// Samples distinct sentences for train/dev/test/monolingual so that no source
/// sentence is shared between any two splits.
pub fn sample_corpus(world: &WorldSpec, sizes: &CorpusSizes, seed: u64) -> Result<CorpusSplit> {
    let total = sizes.parallel() + sizes.mono;
    let [lo, hi] = world.config.sentence_length;
    let n_words = world.lexicon.len() as u128;
    let space: u128 = (lo..=hi).fold(0u128, |acc, len| {
        acc.saturating_add(n_words.saturating_pow(len as u32))
    });
    if space < total as u128 {
        return Err(Error::Sampling(format!(
            "only {space} distinct sentences exist but {total} were requested"
        )));
    }

    let mut rng = rng::stream(seed, "corpus");
    let mut seen = HashSet::with_capacity(total);
    let mut sentences: Vec<Vec<String>> = Vec::with_capacity(total);
    let max_attempts = 50 * total + 10_000;
    let mut attempts = 0;
    while sentences.len() < total {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Sampling(format!(
                "drew only {} distinct sentences in {max_attempts} attempts",
                sentences.len()
            )));
        }
        let len = rng.random_range(lo..=hi);
        let s: Vec<String> = (0..len)
            .map(|_| world.lexicon[rng.random_range(0..world.lexicon.len())].word.clone())
            .collect();
        if seen.insert(s.clone()) {
            sentences.push(s);
        }
    }

    let speakers = world.speaker_count();
    let render = |offset: usize, count: usize, name: &str| -> Result<Vec<Utterance>> {
        (0..count)
            .map(|i| {
                let mut item = rng::item_stream(seed, name, i as u64);
                let speaker = item.random_range(0..speakers);
                let synth_seed: u64 = item.random();
                synthesize_utterance(world, &sentences[offset + i], speaker, synth_seed)
            })
            .collect()
    };
    let train = render(0, sizes.train, "train")?;
    let dev = render(sizes.train, sizes.dev, "dev")?;
    let test = render(sizes.train + sizes.dev, sizes.test, "test")?;
    let monolingual = sentences[sizes.parallel()..]
        .iter()
        .map(|s| {
            Ok(MonoSentence {
                source_tokens: s.clone(),
                target_tokens: translate_oracle(world, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CorpusSplit {
        train,
        dev,
        test,
        monolingual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = WorldConfig {
            phoneme_count: 1,
            ..Default::default()
        };
        assert!(matches!(build_world(&c, 0), Err(Error::Config(_))));
        c.phoneme_count = 5;
        c.duration_range = [3, 2];
        assert!(matches!(build_world(&c, 0), Err(Error::Config(_))));
        c.duration_range = [0, 2];
        assert!(matches!(build_world(&c, 0), Err(Error::Config(_))));
        c.duration_range = [1, 1];
        c.frame_dim = 1;
        assert!(matches!(build_world(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn unreachable_separation_is_a_generation_error() {
        // 25 points in 2-D cannot all sit 40 apart when drawn from N(0, 1).
        let c = WorldConfig {
            frame_dim: 2,
            noise_sigma: 10.0,
            ..Default::default()
        };
        assert!(matches!(build_world(&c, 3), Err(Error::Generation(_))));
    }

    #[test]
    fn two_phoneme_noise_free_world_has_distinct_prototypes() {
        let c = WorldConfig {
            phoneme_count: 2,
            frame_dim: 2,
            noise_sigma: 0.0,
            lexicon_size: 4,
            ..Default::default()
        };
        let w = build_world(&c, 7).unwrap();
        assert_ne!(w.prototypes.row(0), w.prototypes.row(1));
    }

    #[test]
    fn build_is_deterministic() {
        let c = WorldConfig::default();
        assert_eq!(build_world(&c, 11).unwrap(), build_world(&c, 11).unwrap());
        assert_ne!(build_world(&c, 11).unwrap(), build_world(&c, 12).unwrap());
    }

    #[test]
    fn default_world_prototypes_are_separated() {
        let c = WorldConfig {
            noise_sigma: 0.1,
            ..Default::default()
        };
        let w = build_world(&c, 1).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..w.prototypes.rows() {
            for j in i + 1..w.prototypes.rows() {
                min = min.min(squared_distance(w.prototypes.row(i), w.prototypes.row(j)).sqrt());
            }
        }
        assert!(min >= 0.4, "min separation {min}");
    }

    #[test]
    fn lexicon_invariants() {
        let w = build_world(&WorldConfig::default(), 5).unwrap();
        assert_eq!(w.lexicon.len(), 40);
        for e in &w.lexicon {
            assert!((2..=4).contains(&e.phonemes.len()));
            assert!(e.phonemes.iter().all(|&p| p < 25));
            assert!((1..=2).contains(&e.translation.len()));
        }
        let distinct: HashSet<_> = w.lexicon.iter().map(|e| &e.phonemes).collect();
        assert_eq!(distinct.len(), w.lexicon.len());
        // speakers average to zero
        for j in 0..w.config.frame_dim {
            let s: f64 = (0..w.speaker_count()).map(|i| w.speakers.row(i)[j]).sum();
            assert!(s.abs() < 1e-12);
        }
        for i in 0..w.speaker_count() {
            let n = w.speakers.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_translation() {
        let w = build_world(&WorldConfig::default(), 5).unwrap();
        assert!(translate_oracle(&w, &[]).unwrap().is_empty());
        let one = &w.lexicon[3];
        assert_eq!(
            translate_oracle(&w, std::slice::from_ref(&one.word)).unwrap(),
            one.translation
        );
        let (a, b) = (&w.lexicon[0], &w.lexicon[1]);
        let mut expected = b.translation.clone();
        expected.extend(a.translation.iter().cloned());
        assert_eq!(
            translate_oracle(&w, &[a.word.clone(), b.word.clone()]).unwrap(),
            expected
        );
        // odd tail stays put
        let c = &w.lexicon[2];
        let mut expected3 = expected.clone();
        expected3.extend(c.translation.iter().cloned());
        assert_eq!(
            translate_oracle(&w, &[a.word.clone(), b.word.clone(), c.word.clone()]).unwrap(),
            expected3
        );
        assert!(matches!(
            translate_oracle(&w, &words("nope")),
            Err(Error::Lexicon(_))
        ));
    }

    #[test]
    fn noise_free_unit_duration_frames_are_prototypes() {
        let c = WorldConfig {
            noise_sigma: 0.0,
            duration_range: [1, 1],
            speaker_count: 1,
            ..Default::default()
        };
        let w = build_world(&c, 2).unwrap();
        let s = words("w00 w01 w02");
        let u = synthesize_utterance(&w, &s, 0, 9).unwrap();
        let ph = w.phonemes_of(&s).unwrap();
        assert_eq!(u.frames.rows(), ph.len());
        for (i, &p) in ph.iter().enumerate() {
            assert_eq!(u.frames.row(i), w.prototypes.row(p));
        }
    }

    #[test]
    fn fixed_duration_frame_count() {
        let c = WorldConfig {
            duration_range: [2, 2],
            phonemes_per_word: [3, 3],
            ..Default::default()
        };
        let w = build_world(&c, 2).unwrap();
        let u = synthesize_utterance(&w, &words("w04"), 1, 0).unwrap();
        assert_eq!(u.frames.rows(), 6);
        assert!(matches!(
            synthesize_utterance(&w, &words("w04"), 9, 0),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            synthesize_utterance(&w, &words("zz"), 0, 0),
            Err(Error::Lexicon(_))
        ));
    }

    #[test]
    fn frame_noise_is_bounded() {
        let c = WorldConfig {
            noise_sigma: 0.1,
            duration_range: [1, 1],
            ..Default::default()
        };
        let w = build_world(&c, 4).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        let mut seed = 0;
        while n < 1000 {
            let s: Vec<String> = (0..5).map(|i| w.lexicon[(seed * 5 + i) % 40].word.clone()).collect();
            let u = synthesize_utterance(&w, &s, seed % 4, seed as u64).unwrap();
            let ph = w.phonemes_of(&s).unwrap();
            for (i, &p) in ph.iter().enumerate() {
                let expect: Vec<f64> = w
                    .prototypes
                    .row(p)
                    .iter()
                    .zip(w.speakers.row(u.speaker_id))
                    .map(|(a, b)| a + b)
                    .collect();
                total += squared_distance(u.frames.row(i), &expect).sqrt();
                n += 1;
            }
            seed += 1;
        }
        let mean = total / n as f64;
        assert!(mean <= 3.0 * 0.1 * (8f64).sqrt(), "mean deviation {mean}");
        assert!(mean > 0.0);
    }

    #[test]
    fn corpus_splits_are_disjoint_and_reproducible() {
        let w = build_world(&WorldConfig::default(), 1).unwrap();
        let sizes = CorpusSizes {
            train: 300,
            dev: 50,
            test: 50,
            mono: 10_000,
        };
        let c = sample_corpus(&w, &sizes, 3).unwrap();
        assert_eq!(c.train.len(), 300);
        assert_eq!(c.monolingual.len(), 10_000);
        let train: HashSet<_> = c.train.iter().map(|u| &u.source_tokens).collect();
        let dev: HashSet<_> = c.dev.iter().map(|u| &u.source_tokens).collect();
        let test: HashSet<_> = c.test.iter().map(|u| &u.source_tokens).collect();
        let mono: HashSet<_> = c.monolingual.iter().map(|m| &m.source_tokens).collect();
        assert!(train.is_disjoint(&mono));
        assert!(train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test));
        assert!(dev.is_disjoint(&mono) && test.is_disjoint(&mono));
        for u in c.train.iter().chain(&c.dev) {
            assert_eq!(translate_oracle(&w, &u.source_tokens).unwrap(), u.target_tokens);
        }
        let again = sample_corpus(&w, &sizes, 3).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn mono_only_corpus_and_capacity_error() {
        let w = build_world(&WorldConfig::default(), 1).unwrap();
        let sizes = CorpusSizes {
            train: 0,
            dev: 0,
            test: 0,
            mono: 20,
        };
        let c = sample_corpus(&w, &sizes, 0).unwrap();
        assert!(c.train.is_empty() && c.dev.is_empty() && c.test.is_empty());
        assert_eq!(c.monolingual.len(), 20);

        let tiny = WorldConfig {
            lexicon_size: 2,
            sentence_length: [1, 2],
            ..Default::default()
        };
        let w = build_world(&tiny, 0).unwrap();
        let sizes = CorpusSizes {
            train: 5,
            dev: 0,
            test: 0,
            mono: 5,
        };
        assert!(matches!(sample_corpus(&w, &sizes, 0), Err(Error::Sampling(_))));
    }
}
