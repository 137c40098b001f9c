//! Joint vocabulary: special symbols, one atomic symbol per cluster id, and
//! byte-pair-merged subwords learned on the target-language text.
//!
//! Id layout is fixed: specials first, then unit symbols `#0..#K-1`, then text
//! symbols (base characters in corpus order, then merge products in learned
//! order).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::UnitSequence;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const BT_TAG: u32 = 4;
pub const SPECIALS: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<BT>"];
pub const NUM_SPECIALS: usize = SPECIALS.len();

/// Word-start marker prepended to every target word before merging.
pub const WORD_START: char = '\u{2581}';

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol<'a> {
    Special(u32),
    Unit(u32),
    Text(&'a str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    unit_count: usize,
    text_symbols: Vec<String>,
    merges: Vec<(String, String)>,
    text_index: HashMap<String, u32>,
    merge_rank: HashMap<(String, String), usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    specials: Vec<String>,
    unit_symbols: Vec<String>,
    merges: Vec<(String, String)>,
    id_table: Vec<(String, u32)>,
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        let id_table = (0..v.size() as u32).map(|id| (v.symbol_string(id), id)).collect();
        VocabRepr {
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            unit_symbols: (0..v.unit_count).map(unit_symbol).collect(),
            merges: v.merges,
            id_table,
        }
    }
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        if r.specials != SPECIALS {
            return Err(Error::Config("vocabulary specials do not match".into()));
        }
        for (k, s) in r.unit_symbols.iter().enumerate() {
            if *s != unit_symbol(k) {
                return Err(Error::Config(format!("unit symbol {k} is `{s}`")));
            }
        }
        let first_text = NUM_SPECIALS + r.unit_symbols.len();
        let mut table = r.id_table;
        table.sort_by_key(|(_, id)| *id);
        for (i, (_, id)) in table.iter().enumerate() {
            if *id as usize != i {
                return Err(Error::Config("vocabulary ids are not contiguous".into()));
            }
        }
        let text_symbols: Vec<String> = table.into_iter().skip(first_text).map(|(s, _)| s).collect();
        Ok(Vocabulary::from_parts(r.unit_symbols.len(), text_symbols, r.merges))
    }
}

fn unit_symbol(k: usize) -> String {
    format!("#{k}")
}

fn word_symbols(word: &str) -> Vec<String> {
    std::iter::once(WORD_START)
        .chain(word.chars())
        .map(|c| c.to_string())
        .collect()
}

impl Vocabulary {
    fn from_parts(unit_count: usize, text_symbols: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let base = (NUM_SPECIALS + unit_count) as u32;
        let text_index = text_symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), base + i as u32))
            .collect();
        let merge_rank = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Self {
            unit_count,
            text_symbols,
            merges,
            text_index,
            merge_rank,
        }
    }

    pub fn size(&self) -> usize {
        NUM_SPECIALS + self.unit_count + self.text_symbols.len()
    }

    pub fn unit_count(&self) -> usize {
        self.unit_count
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn unit_id(&self, unit: u32) -> Result<u32> {
        if unit as usize >= self.unit_count {
            return Err(Error::Index {
                index: unit as usize,
                bound: self.unit_count,
            });
        }
        Ok(NUM_SPECIALS as u32 + unit)
    }

    pub fn symbol(&self, id: u32) -> Result<Symbol<'_>> {
        let i = id as usize;
        if i < NUM_SPECIALS {
            Ok(Symbol::Special(id))
        } else if i < NUM_SPECIALS + self.unit_count {
            Ok(Symbol::Unit((i - NUM_SPECIALS) as u32))
        } else if i < self.size() {
            Ok(Symbol::Text(&self.text_symbols[i - NUM_SPECIALS - self.unit_count]))
        } else {
            Err(Error::Decode(id))
        }
    }

    fn symbol_string(&self, id: u32) -> String {
        match self.symbol(id).expect("id in range") {
            Symbol::Special(s) => SPECIALS[s as usize].to_string(),
            Symbol::Unit(k) => unit_symbol(k as usize),
            Symbol::Text(t) => t.to_string(),
        }
    }

    pub fn is_unit_id(&self, id: u32) -> bool {
        matches!(self.symbol(id), Ok(Symbol::Unit(_)))
    }

    /// Applies merges to one word, lowest-rank pair first.
    fn segment(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.merge_rank.get(&(w[0].clone(), w[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == *a && syms[i + 1] == *b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    pub fn encode_text<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        let mut out = Vec::new();
        for t in tokens {
            for s in self.segment(t.as_ref()) {
                out.push(self.text_index.get(&s).copied().unwrap_or(UNK));
            }
        }
        out
    }

    pub fn encode_units(&self, units: &UnitSequence) -> Result<Vec<u32>> {
        units.units.iter().map(|&u| self.unit_id(u)).collect()
    }

    /// Text tokens from ids; specials and unit symbols are dropped.
    pub fn decode_text(&self, ids: &[u32]) -> Result<Vec<String>> {
        let mut joined = String::new();
        for &id in ids {
            if let Symbol::Text(t) = self.symbol(id)? {
                joined.push_str(t);
            }
        }
        Ok(joined
            .split(WORD_START)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect())
    }

    /// Unit sequence from ids, re-applying deduplication; non-unit ids are dropped.
    pub fn decode_units(&self, ids: &[u32]) -> Result<UnitSequence> {
        let mut raw = Vec::with_capacity(ids.len());
        for &id in ids {
            if let Symbol::Unit(k) = self.symbol(id)? {
                raw.push(k);
            }
        }
        Ok(UnitSequence::dedup(&raw))
    }

    /// `[BOS, (BT_TAG), units.., EOS]`
    pub fn unit_source(&self, units: &UnitSequence, tagged: bool) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(units.len() + 3);
        ids.push(BOS);
        if tagged {
            ids.push(BT_TAG);
        }
        ids.extend(self.encode_units(units)?);
        ids.push(EOS);
        Ok(ids)
    }

    /// Hex SHA-256 prefix of the serialized table; checkpoints record it.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("vocabulary serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// `[BOS, text.., EOS]`
    pub fn text_sequence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        let mut ids = vec![BOS];
        ids.extend(self.encode_text(tokens));
        ids.push(EOS);
        ids
    }
}

/// Learns merges on the target side of the parallel training text until the
/// vocabulary reaches `target_size` or no pair occurs at least twice.
pub fn learn_vocab<S: AsRef<str>>(
    target_sentences: &[Vec<S>],
    unit_count: usize,
    target_size: usize,
) -> Result<Vocabulary> {
    // word frequencies, first-occurrence order
    let mut words: Vec<(Vec<String>, usize)> = Vec::new();
    let mut word_pos: HashMap<&str, usize> = HashMap::new();
    let mut base: Vec<String> = Vec::new();
    let mut base_seen: HashMap<String, ()> = HashMap::new();
    for sent in target_sentences {
        for w in sent {
            let w = w.as_ref();
            match word_pos.get(w) {
                Some(&i) => words[i].1 += 1,
                None => {
                    let syms = word_symbols(w);
                    for s in &syms {
                        if base_seen.insert(s.clone(), ()).is_none() {
                            base.push(s.clone());
                        }
                    }
                    word_pos.insert(w, words.len());
                    words.push((syms, 1));
                }
            }
        }
    }

    let floor = NUM_SPECIALS + unit_count + base.len();
    if target_size < floor {
        return Err(Error::Capacity(format!(
            "target size {target_size} is below the {floor} entries needed for specials, units and characters"
        )));
    }

    let mut text_symbols = base;
    let mut known: HashMap<String, ()> = text_symbols.iter().map(|s| (s.clone(), ())).collect();
    let mut merges: Vec<(String, String)> = Vec::new();
    while NUM_SPECIALS + unit_count + text_symbols.len() < target_size {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (syms, f) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0].as_str(), w[1].as_str())).or_default() += f;
            }
        }
        let best = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        let merged = format!("{a}{b}");
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = out;
        }
        if known.insert(merged.clone(), ()).is_none() {
            text_symbols.push(merged);
        }
        merges.push((a, b));
    }
    Ok(Vocabulary::from_parts(unit_count, text_symbols, merges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn floor_size_learns_no_merges() {
        let corpus = sents(&["abab abab"]);
        // base chars: WORD_START, a, b
        let v = learn_vocab(&corpus, 4, NUM_SPECIALS + 4 + 3).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.size(), NUM_SPECIALS + 7);
        assert!(matches!(
            learn_vocab(&corpus, 4, NUM_SPECIALS + 4 + 2),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let corpus = sents(&["abab abab"]);
        let v = learn_vocab(&corpus, 2, 100).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), "b".to_string()));
        let one_merge = learn_vocab(&corpus, 2, NUM_SPECIALS + 2 + 4).unwrap();
        assert_eq!(one_merge.merges().len(), 1);
        // ▁ ab ab
        assert_eq!(one_merge.encode_text(&["abab"]).len(), 3);
        // with the word marker excluded, "abab" is two `ab` symbols
        let ab = one_merge.text_index["ab"];
        assert_eq!(&one_merge.encode_text(&["abab"])[1..], &[ab, ab]);
    }

    #[test]
    fn unit_symbols_are_atomic() {
        let v = learn_vocab(&sents(&["ka lo", "ka"]), 8, 40).unwrap();
        let u = UnitSequence::dedup(&[0, 2, 5]);
        let ids = v.encode_units(&u).unwrap();
        assert_eq!(ids, vec![5, 7, 10]);
        assert!(ids.iter().all(|&i| v.is_unit_id(i)));
        assert!(v.encode_units(&UnitSequence::dedup(&[8])).is_err());
        assert!(v.merges().iter().all(|(a, b)| !a.starts_with('#') && !b.starts_with('#')));
    }

    #[test]
    fn decode_strips_specials_and_dedups_units() {
        let v = learn_vocab(&sents(&["ka lo"]), 8, 30).unwrap();
        assert!(v.decode_text(&[BOS, EOS]).unwrap().is_empty());
        assert!(v.decode_units(&[BOS, EOS]).unwrap().is_empty());
        let ids: Vec<u32> = [3, 3, 7].iter().map(|&u| v.unit_id(u).unwrap()).collect();
        assert_eq!(v.decode_units(&ids).unwrap().units, vec![3, 7]);
        assert!(matches!(v.decode_text(&[9999]), Err(Error::Decode(9999))));
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = learn_vocab(&sents(&["ka"]), 2, 20).unwrap();
        assert!(v.encode_text(&["kx"]).contains(&UNK));
    }

    #[test]
    fn tag_and_framing() {
        let v = learn_vocab(&sents(&["ka"]), 4, 20).unwrap();
        let u = UnitSequence::dedup(&[1, 2]);
        assert_eq!(v.unit_source(&u, true).unwrap(), vec![BOS, BT_TAG, 6, 7, EOS]);
        assert_eq!(v.unit_source(&u, false).unwrap(), vec![BOS, 6, 7, EOS]);
    }

    #[test]
    fn json_round_trip() {
        let v = learn_vocab(&sents(&["kalo mi kalo", "mi mi tu"]), 6, 60).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-e]{1,5}", 1..6), 1..20),
            probe in proptest::collection::vec("[a-e]{1,6}", 0..8),
            size in 20usize..80,
        ) {
            let v = learn_vocab(&corpus, 3, size.max(NUM_SPECIALS + 3 + 6)).unwrap();
            // every character of `probe` may be absent from `corpus`; restrict to in-vocab text
            let in_vocab: Vec<String> = probe
                .into_iter()
                .filter(|w| w.chars().all(|c| v.text_index.contains_key(&c.to_string())))
                .collect();
            let ids = v.encode_text(&in_vocab);
            prop_assert!(!ids.contains(&UNK));
            prop_assert!(!ids.contains(&BT_TAG));
            prop_assert_eq!(v.decode_text(&ids).unwrap(), in_vocab);
        }
    }
}
