//! Tokenization, vocabulary construction and corpus encoding.
//!
//! A token is a maximal run of Unicode letters; digits, punctuation and
//! whitespace all act as separators, so `"2nd-rate"` yields `"nd"` and
//! `"rate"`. Tokens are lowercased, filtered by minimum length and the
//! stoplist, and never stemmed.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::DocumentSet;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

pub const DEFAULT_STOPLIST: &str = include_str!("../data/stoplist-en.txt");
pub const TOKEN_PATTERN: &str = "maximal runs of letter characters";

/// Parses a newline-separated stoplist; `#` starts a comment line.
pub fn parse_stoplist(raw: &str) -> BTreeSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn read_stoplist(path: &Path) -> Result<BTreeSet<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stoplist(&raw))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepRules {
    pub lowercase: bool,
    pub token_pattern: String,
    pub min_token_len: usize,
    pub stoplist: BTreeSet<String>,
    /// Always false; stemming is not supported.
    pub stem: bool,
}

impl Default for PrepRules {
    fn default() -> Self {
        PrepRules {
            lowercase: true,
            token_pattern: TOKEN_PATTERN.to_string(),
            min_token_len: 2,
            stoplist: parse_stoplist(DEFAULT_STOPLIST),
            stem: false,
        }
    }
}

impl PrepRules {
    pub fn with_stoplist<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stoplist = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem {
            return Err(Error::InvalidParameter("stemming is not supported".into()));
        }
        if self.min_token_len == 0 {
            return Err(Error::InvalidParameter("min_token_len must be at least 1".into()));
        }
        if self.token_pattern != TOKEN_PATTERN {
            return Err(Error::InvalidParameter(format!(
                "unsupported token pattern {:?}",
                self.token_pattern
            )));
        }
        if let Some(w) = self.stoplist.iter().find(|w| w.to_lowercase() != **w) {
            return Err(Error::InvalidParameter(format!("stoplist entry {w:?} is not lowercase")));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("prep-rules/v1");
        fp.u64(self.lowercase as u64)
            .str(&self.token_pattern)
            .u64(self.min_token_len as u64)
            .u64(self.stem as u64)
            .u64(self.stoplist.len() as u64);
        for w in &self.stoplist {
            fp.str(w);
        }
        fp.finish()
    }
}

pub fn tokenize(text: &str, rules: &PrepRules) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if current.chars().count() >= rules.min_token_len && !rules.stoplist.contains(current.as_str()) {
            tokens.push(std::mem::take(current));
        } else {
            current.clear();
        }
    };
    for ch in text.chars() {
        if ch.is_alphabetic() {
            if rules.lowercase {
                current.extend(ch.to_lowercase());
            } else {
                current.push(ch);
            }
        } else if !current.is_empty() {
            flush(&mut current, &mut tokens);
        }
    }
    if !current.is_empty() {
        flush(&mut current, &mut tokens);
    }
    tokens
}

/// Sorted word list with its reverse index.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
    rules_fingerprint: String,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words && self.rules_fingerprint == other.rules_fingerprint
    }
}

impl Vocabulary {
    /// Builds from an arbitrary word collection; words are sorted and deduplicated.
    pub fn from_words<I, S>(words: I, rules_fingerprint: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        let words: Vec<String> = set.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary {
            words,
            index,
            rules_fingerprint: rules_fingerprint.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn rules_fingerprint(&self) -> &str {
        &self.rules_fingerprint
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("vocabulary/v1");
        fp.str(&self.rules_fingerprint).u64(self.words.len() as u64);
        for w in &self.words {
            fp.str(w);
        }
        fp.finish()
    }

    /// The export form: a JSON array of words in id order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.words)?)
    }
}

pub fn build_vocabulary(ds: &DocumentSet, rules: &PrepRules) -> Result<Vocabulary> {
    rules.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let words = ds
        .documents()
        .par_iter()
        .map(|d| tokenize(&d.text, rules).into_iter().collect::<BTreeSet<_>>())
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    if words.is_empty() {
        return Err(Error::DegenerateCorpus);
    }
    Ok(Vocabulary::from_words(words, rules.fingerprint()))
}

/// Documents as token-id sequences against a closed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedCorpus {
    pub docs: Vec<Vec<u32>>,
    pub doc_ids: Vec<String>,
    pub vocab_size: usize,
    pub total_tokens: usize,
    pub vocab_fingerprint: String,
}

impl EncodedCorpus {
    pub fn new(
        docs: Vec<Vec<u32>>,
        doc_ids: Vec<String>,
        vocab_size: usize,
        vocab_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if docs.len() != doc_ids.len() {
            return Err(Error::InvalidParameter(format!(
                "{} documents but {} ids",
                docs.len(),
                doc_ids.len()
            )));
        }
        if let Some(bad) = docs.iter().flatten().find(|&&w| w as usize >= vocab_size) {
            return Err(Error::InvalidParameter(format!(
                "token id {bad} out of range for vocabulary of {vocab_size}"
            )));
        }
        let total_tokens = docs.iter().map(Vec::len).sum();
        Ok(EncodedCorpus {
            docs,
            doc_ids,
            vocab_size,
            total_tokens,
            vocab_fingerprint: vocab_fingerprint.into(),
        })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    /// Sparse document-term counts: per document, `(word id, count)` sorted by id.
    pub fn dtm(&self) -> Vec<Vec<(u32, u32)>> {
        self.docs
            .iter()
            .map(|doc| {
                let mut sorted = doc.clone();
                sorted.sort_unstable();
                let mut row: Vec<(u32, u32)> = Vec::new();
                for w in sorted {
                    match row.last_mut() {
                        Some((last, c)) if *last == w => *c += 1,
                        _ => row.push((w, 1)),
                    }
                }
                row
            })
            .collect()
    }

    /// The documents at `indices`, in that order, sharing this vocabulary.
    pub fn subset(&self, indices: &[usize]) -> EncodedCorpus {
        let docs: Vec<Vec<u32>> = indices.iter().map(|&i| self.docs[i].clone()).collect();
        let total_tokens = docs.iter().map(Vec::len).sum();
        EncodedCorpus {
            docs,
            doc_ids: indices.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            vocab_size: self.vocab_size,
            total_tokens,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("encoded-corpus/v1");
        fp.str(&self.vocab_fingerprint)
            .u64(self.vocab_size as u64)
            .u64(self.docs.len() as u64);
        for (id, doc) in self.doc_ids.iter().zip(&self.docs) {
            fp.str(id).u64(doc.len() as u64);
            for &w in doc {
                fp.u64(w as u64);
            }
        }
        fp.finish()
    }
}

pub fn encode_corpus(ds: &DocumentSet, vocab: &Vocabulary, rules: &PrepRules) -> Result<EncodedCorpus> {
    let rules_fp = rules.fingerprint();
    if rules_fp != vocab.rules_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "preprocessing rules",
            expected: vocab.rules_fingerprint.clone(),
            found: rules_fp,
        });
    }
    let docs = ds
        .documents()
        .par_iter()
        .map(|d| {
            tokenize(&d.text, rules)
                .into_iter()
                .map(|t| vocab.id(&t).ok_or(Error::OutOfVocabulary { token: t }))
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    EncodedCorpus::new(docs, ds.ids(), vocab.len(), vocab.fingerprint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Document;

    fn rules(stop: &[&str]) -> PrepRules {
        PrepRules::default().with_stoplist(stop)
    }

    fn docs(texts: &[&str]) -> DocumentSet {
        DocumentSet::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), *t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_strips_digits_and_punctuation() {
        assert_eq!(
            tokenize("My boss, aged 45, laughed.", &rules(&["my"])),
            vec!["boss", "aged", "laughed"]
        );
        assert!(tokenize("", &rules(&[])).is_empty());
        assert!(tokenize("the a an", &rules(&["the", "a", "an"])).is_empty());
        assert_eq!(tokenize("2nd-rate", &rules(&[])), vec!["nd", "rate"]);
        assert_eq!(tokenize("don't", &rules(&[])), vec!["don"]);
    }

    #[test]
    fn tokenize_unicode_letters() {
        assert_eq!(tokenize("Ünïcode CAFÉ", &rules(&[])), vec!["ünïcode", "café"]);
    }

    #[test]
    fn default_stoplist_is_lowercase_and_loaded() {
        let r = PrepRules::default();
        r.validate().unwrap();
        assert!(r.stoplist.contains("the"));
        assert!(!r.stem);
    }

    #[test]
    fn invalid_rules() {
        let mut r = PrepRules::default();
        r.stem = true;
        assert!(r.validate().is_err());
        let mut r = PrepRules::default();
        r.min_token_len = 0;
        assert!(r.validate().is_err());
        let r = PrepRules {
            stoplist: ["The".to_string()].into(),
            ..PrepRules::default()
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn vocabulary_sorted() {
        let v = build_vocabulary(&docs(&["touch hand", "hand kiss"]), &rules(&[])).unwrap();
        assert_eq!(v.words(), ["hand", "kiss", "touch"]);
        let v = build_vocabulary(&docs(&["kiss kiss kiss"]), &rules(&[])).unwrap();
        assert_eq!(v.words(), ["kiss"]);
        assert_eq!(v.to_json().unwrap(), r#"["kiss"]"#);
    }

    #[test]
    fn degenerate_corpus() {
        let err = build_vocabulary(&docs(&["the", "12 34"]), &rules(&["the"])).unwrap_err();
        assert!(matches!(err, Error::DegenerateCorpus));
    }

    #[test]
    fn encode_direct_lookup() {
        let r = rules(&["the"]);
        let ds = docs(&["touch", "hand kiss hand", "the"]);
        let v = build_vocabulary(&ds, &r).unwrap();
        let ec = encode_corpus(&ds, &v, &r).unwrap();
        assert_eq!(ec.docs[1], vec![0, 1, 0]);
        assert!(ec.docs[2].is_empty());
        assert_eq!(ec.num_docs(), 3);
        assert_eq!(ec.total_tokens, 4);
    }

    #[test]
    fn encode_detects_rule_mismatch_and_oov() {
        let ds = docs(&["hand kiss"]);
        let v = build_vocabulary(&ds, &rules(&[])).unwrap();
        assert!(matches!(
            encode_corpus(&ds, &v, &rules(&["kiss"])),
            Err(Error::FingerprintMismatch { .. })
        ));
        let other = docs(&["hand touch"]);
        assert!(matches!(
            encode_corpus(&other, &v, &rules(&[])),
            Err(Error::OutOfVocabulary { .. })
        ));
    }

    #[test]
    fn dtm_matches_nested_loop_count() {
        let texts = [
            "boss touched my hand and my back",
            "the manager said women talk too much",
            "hand hand back kiss",
            "",
            "kiss touch back night day day",
        ];
        let r = rules(&["my", "the", "and"]);
        let ds = DocumentSet::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("d{i}"), *t))
                .collect(),
        )
        .unwrap();
        let v = build_vocabulary(&ds, &r).unwrap();
        let ec = encode_corpus(&ds, &v, &r).unwrap();
        let dtm = ec.dtm();
        for (d, text) in texts.iter().enumerate() {
            let toks = tokenize(text, &r);
            for (w, word) in v.words().iter().enumerate() {
                let mut brute = 0u32;
                for t in &toks {
                    if t == word {
                        brute += 1;
                    }
                }
                let got = dtm[d].iter().find(|(id, _)| *id as usize == w).map_or(0, |(_, c)| *c);
                assert_eq!(got, brute, "doc {d} word {word}");
            }
            let row_sum: u32 = dtm[d].iter().map(|(_, c)| c).sum();
            assert_eq!(row_sum as usize, ec.docs[d].len());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokens_are_verbatim_lowercase_substrings(text in "\\PC{0,80}") {
                let r = rules(&["the"]);
                let lower = text.to_lowercase();
                for t in tokenize(&text, &r) {
                    prop_assert!(t.chars().count() >= 2);
                    prop_assert!(t.chars().all(char::is_alphabetic));
                    prop_assert!(lower.contains(&t) || text.chars().flat_map(char::to_lowercase).collect::<String>().contains(&t));
                    prop_assert_ne!(t.as_str(), "the");
                }
            }

            #[test]
            fn encoding_conserves_tokens(texts in proptest::collection::vec("[a-zA-Z ,.0-9]{0,40}", 1..8)) {
                let mut texts = texts;
                texts.push("anchor".into());
                let ds = DocumentSet::new(texts.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.as_str())).collect()).unwrap();
                let r = rules(&[]);
                let v = build_vocabulary(&ds, &r).unwrap();
                let ec = encode_corpus(&ds, &v, &r).unwrap();
                let expected: usize = texts.iter().map(|t| tokenize(t, &r).len()).sum();
                prop_assert_eq!(ec.total_tokens, expected);
                prop_assert!(v.words().windows(2).all(|w| w[0] < w[1]));
                let again = encode_corpus(&ds, &build_vocabulary(&ds, &r).unwrap(), &r).unwrap();
                prop_assert_eq!(again, ec);
            }
        }
    }
}
