//! Topic weights, rankings, and per-topic top words and top documents.
//!
//! A topic's weight is its summed document proportions normalized by the
//! total over all topics; since every theta row sums to one the denominator
//! equals the number of documents.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::TopicModel;
use crate::textprep::{EncodedCorpus, Vocabulary};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_WORDS: usize = 10;
pub const DEFAULT_TOP_DOCS: usize = 20;

/// Normalized topic weights from an `n × k` theta matrix.
pub fn topic_weights(theta: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = theta.first().map_or(0, Vec::len);
    if theta.is_empty() || k == 0 {
        return Err(Error::InvalidParameter("theta is empty".into()));
    }
    let mut sums = vec![0.0; k];
    for row in theta {
        if row.len() != k {
            return Err(Error::InvalidParameter("theta rows have unequal lengths".into()));
        }
        for (s, x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    let total: f64 = sums.iter().sum();
    Ok(sums.into_iter().map(|s| s / total).collect())
}

/// Descending by value, then ascending by key.
fn by_value_then_key<K: Ord>(a: &(K, f64), b: &(K, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn top_n<K: Ord + Clone>(mut items: Vec<(K, f64)>, count: usize) -> Vec<(K, f64)> {
    let count = count.min(items.len());
    if count == 0 {
        return Vec::new();
    }
    if count < items.len() {
        items.select_nth_unstable_by(count - 1, by_value_then_key);
        items.truncate(count);
    }
    items.sort_by(by_value_then_key);
    items
}

pub fn top_words(phi_row: &[f64], vocab: &[String], count: usize) -> Vec<(String, f64)> {
    let items = vocab.iter().cloned().zip(phi_row.iter().copied()).collect();
    top_n(items, count)
}

pub fn top_documents(theta_column: &[f64], doc_ids: &[String], count: usize) -> Vec<(String, f64)> {
    let items = doc_ids.iter().cloned().zip(theta_column.iter().copied()).collect();
    top_n(items, count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_index: usize,
    pub weight: f64,
    pub rank: usize,
    pub top_words: Vec<WordScore>,
    pub top_docs: Vec<DocScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub format_version: u32,
    pub model_fingerprint: String,
    pub vocab_fingerprint: String,
    pub corpus_fingerprint: String,
    pub words_per_topic: usize,
    pub docs_per_topic: usize,
    pub summaries: Vec<TopicSummary>,
}

/// Ranks topics by weight (ties to the lower topic index) and extracts
/// their top words and documents.
pub fn build_report(
    model: &TopicModel,
    vocab: &Vocabulary,
    corpus: &EncodedCorpus,
    words: usize,
    docs: usize,
) -> Result<TopicReport> {
    if model.vocab_fingerprint != vocab.fingerprint() {
        return Err(Error::FingerprintMismatch {
            what: "vocabulary",
            expected: model.vocab_fingerprint.clone(),
            found: vocab.fingerprint(),
        });
    }
    let corpus_fp = corpus.fingerprint();
    if model.corpus_fingerprint != corpus_fp {
        return Err(Error::FingerprintMismatch {
            what: "corpus",
            expected: model.corpus_fingerprint.clone(),
            found: corpus_fp,
        });
    }
    build_report_unchecked(model, vocab.words(), &corpus.doc_ids, words, docs)
}

/// [`build_report`] without fingerprint checks, for callers that hold the
/// word list and document ids directly.
pub fn build_report_unchecked(
    model: &TopicModel,
    vocab: &[String],
    doc_ids: &[String],
    words: usize,
    docs: usize,
) -> Result<TopicReport> {
    if words == 0 || docs == 0 {
        return Err(Error::InvalidParameter("word and document counts must be at least 1".into()));
    }
    if vocab.len() != model.vocab_size() || doc_ids.len() != model.num_docs() {
        return Err(Error::InvalidParameter(format!(
            "model is {}×{} (docs×words) but got {} ids and {} words",
            model.num_docs(),
            model.vocab_size(),
            doc_ids.len(),
            vocab.len()
        )));
    }
    let weights = topic_weights(&model.theta)?;
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let summaries = order
        .iter()
        .enumerate()
        .map(|(pos, &t)| TopicSummary {
            topic_index: t,
            weight: weights[t],
            rank: pos + 1,
            top_words: top_words(&model.phi[t], vocab, words)
                .into_iter()
                .map(|(word, prob)| WordScore { word, prob })
                .collect(),
            top_docs: top_documents(&model.topic_column(t), doc_ids, docs)
                .into_iter()
                .map(|(doc_id, prob)| DocScore { doc_id, prob })
                .collect(),
        })
        .collect();
    Ok(TopicReport {
        format_version: REPORT_FORMAT_VERSION,
        model_fingerprint: model.fingerprint(),
        vocab_fingerprint: model.vocab_fingerprint.clone(),
        corpus_fingerprint: model.corpus_fingerprint.clone(),
        words_per_topic: words,
        docs_per_topic: docs,
        summaries,
    })
}

impl TopicReport {
    pub fn num_topics(&self) -> usize {
        self.summaries.len()
    }

    pub fn by_topic(&self, topic: usize) -> Option<&TopicSummary> {
        self.summaries.iter().find(|s| s.topic_index == topic)
    }

    pub fn rank_of(&self, topic: usize) -> Option<usize> {
        self.by_topic(topic).map(|s| s.rank)
    }

    /// Ranked topic table in Markdown: rank, label placeholder, weight, top words.
    pub fn to_markdown(&self, labels: &dyn Fn(usize) -> Option<String>) -> String {
        let mut out = String::from("| Topic | Label | Weight | Top words |\n|---|---|---|---|\n");
        for s in &self.summaries {
            let words: Vec<&str> = s.top_words.iter().map(|w| w.word.as_str()).collect();
            let _ = writeln!(
                out,
                "| T{} | {} | {:.4} | {} |",
                s.rank,
                labels(s.topic_index).unwrap_or_default(),
                s.weight,
                words.join(" ")
            );
        }
        out
    }

    /// Same content as [`TopicReport::to_markdown`] as CSV.
    pub fn to_csv(&self, labels: &dyn Fn(usize) -> Option<String>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "topic_index", "label", "weight", "top_words"])?;
        for s in &self.summaries {
            let words: Vec<&str> = s.top_words.iter().map(|w| w.word.as_str()).collect();
            w.write_record([
                s.rank.to_string(),
                s.topic_index.to_string(),
                labels(s.topic_index).unwrap_or_default(),
                format!("{:.4}", s.weight),
                words.join(" "),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Per-topic top-document listing for coder review; `text` resolves a
    /// document id to its story.
    pub fn stories_markdown(&self, text: &dyn Fn(&str) -> Option<String>) -> String {
        let mut out = String::new();
        for s in &self.summaries {
            let words: Vec<&str> = s.top_words.iter().map(|w| w.word.as_str()).collect();
            let _ = writeln!(
                out,
                "## T{} (topic {}, weight {:.4})\n\n{}\n",
                s.rank,
                s.topic_index,
                s.weight,
                words.join(" ")
            );
            for (i, d) in s.top_docs.iter().enumerate() {
                let body = text(&d.doc_id).unwrap_or_default();
                let _ = writeln!(out, "{}. `{}` ({:.4}): {}", i + 1, d.doc_id, d.prob, body.replace('\n', " "));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::{Hyperparams, MODEL_FORMAT_VERSION};

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn model(phi: Vec<Vec<f64>>, theta: Vec<Vec<f64>>) -> TopicModel {
        TopicModel {
            format_version: MODEL_FORMAT_VERSION,
            hyper: Hyperparams::with_k(phi.len()),
            vocab_fingerprint: "v".into(),
            corpus_fingerprint: "c".into(),
            phi,
            theta,
            z: None,
        }
    }

    #[test]
    fn uniform_weights() {
        let w = topic_weights(&vec![vec![0.25; 4]; 3]).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn weights_by_direct_summation() {
        let w = topic_weights(&[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        assert!((w[0] - 0.6).abs() < 1e-12 && (w[1] - 0.4).abs() < 1e-12);
        assert!(topic_weights(&[]).is_err());
    }

    #[test]
    fn top_words_sorted_and_clamped() {
        let vocab = strings(&["touch", "hand", "kiss"]);
        let row = [0.5, 0.3, 0.2];
        assert_eq!(
            top_words(&row, &vocab, 2),
            vec![("touch".to_string(), 0.5), ("hand".to_string(), 0.3)]
        );
        assert_eq!(top_words(&row, &vocab, 10).len(), 3);
    }

    #[test]
    fn ties_break_by_ascending_key() {
        let vocab = strings(&["b", "a", "c"]);
        let got = top_words(&[0.4, 0.4, 0.2], &vocab, 2);
        assert_eq!(got[0].0, "a");
        assert_eq!(got[1].0, "b");
    }

    #[test]
    fn top_documents_sorted_and_clamped() {
        let ids = strings(&["d0", "d1", "d2"]);
        let got = top_documents(&[0.9, 0.2, 0.5], &ids, 2);
        assert_eq!(got.iter().map(|d| d.0.as_str()).collect::<Vec<_>>(), ["d0", "d2"]);
        assert_eq!(top_documents(&[0.9, 0.2, 0.5], &ids, 20).len(), 3);
    }

    #[test]
    fn single_topic_report() {
        let m = model(vec![vec![0.7, 0.3]], vec![vec![1.0], vec![1.0]]);
        let r = build_report_unchecked(&m, &strings(&["a", "b"]), &strings(&["x", "y"]), 10, 20).unwrap();
        assert_eq!(r.num_topics(), 1);
        assert_eq!(r.summaries[0].rank, 1);
        assert!((r.summaries[0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_ranks_by_weight() {
        let m = model(
            vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]],
        );
        let r = build_report_unchecked(&m, &strings(&["a", "b"]), &strings(&["x", "y", "z"]), 1, 2).unwrap();
        let order: Vec<usize> = r.summaries.iter().map(|s| s.topic_index).collect();
        assert_eq!(order, vec![1, 2, 0]);
        assert_eq!(r.rank_of(0), Some(3));
        let md = r.to_markdown(&|t| (t == 1).then(|| "Unwanted Touching".to_string()));
        assert!(md.contains("| T1 | Unwanted Touching | 0.4667 | a |"));
        let csv = r.to_csv(&|_| None).unwrap();
        assert!(csv.starts_with("rank,topic_index,label,weight,top_words\n1,1,,0.4667,a\n"));
    }

    #[test]
    fn report_rejects_shape_mismatch() {
        let m = model(vec![vec![1.0]], vec![vec![1.0]]);
        assert!(build_report_unchecked(&m, &strings(&["a", "b"]), &strings(&["x"]), 10, 20).is_err());
        assert!(build_report_unchecked(&m, &strings(&["a"]), &strings(&["x"]), 0, 20).is_err());
    }

    #[test]
    fn stories_listing() {
        let m = model(vec![vec![1.0]], vec![vec![1.0]]);
        let r = build_report_unchecked(&m, &strings(&["a"]), &strings(&["x"]), 10, 20).unwrap();
        let md = r.stories_markdown(&|id| Some(format!("story {id}\nline")));
        assert!(md.contains("1. `x` (1.0000): story x line"));
    }
}
