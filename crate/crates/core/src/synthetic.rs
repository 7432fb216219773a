//! Planted-topic corpora with known structure, for recovery checks and
//! pipeline fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus_io::{Document, DocumentSet};
use crate::textprep::EncodedCorpus;

const TOPIC_STEMS: [&str; 12] = [
    "ka", "lo", "mi", "nu", "pe", "ro", "su", "ti", "va", "zo", "bre", "gla",
];
const WORD_ENDINGS: [&str; 12] = [
    "bax", "cem", "dir", "fov", "gup", "hal", "jek", "kiw", "lun", "mop", "nyr", "quz",
];

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub docs: usize,
    pub doc_len: usize,
    /// Symmetric Dirichlet parameter for each document's topic proportions.
    pub doc_topic_alpha: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            topics: 5,
            words_per_topic: 10,
            docs: 500,
            doc_len: 50,
            doc_topic_alpha: 1.0,
            seed: 0,
        }
    }
}

/// Planted corpus with disjoint per-topic vocabularies. Word ids follow
/// sorted word order, matching a vocabulary built from the rendered text.
#[derive(Debug, Clone)]
pub struct Planted {
    pub spec: PlantedSpec,
    pub corpus: EncodedCorpus,
    pub words: Vec<String>,
    /// Owning topic of each word id.
    pub word_topic: Vec<usize>,
    /// Largest-proportion topic of each document.
    pub primary: Vec<usize>,
}

impl Planted {
    pub fn topic_words(&self, t: usize) -> Vec<usize> {
        (0..self.words.len()).filter(|&w| self.word_topic[w] == t).collect()
    }

    /// Renders the corpus as text documents tagged `workplace`.
    pub fn to_documents(&self) -> DocumentSet {
        let docs = self
            .corpus
            .docs
            .iter()
            .zip(&self.corpus.doc_ids)
            .map(|(doc, id)| {
                let text = doc
                    .iter()
                    .map(|&w| self.words[w as usize].as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                Document::new(id.clone(), text).with_tags(["workplace"])
            })
            .collect();
        DocumentSet::new(docs).expect("generated ids are unique")
    }
}

/// Word `j` of topic `t`, letters only so it survives tokenization.
pub fn planted_word(t: usize, j: usize) -> String {
    let stem = TOPIC_STEMS[t % TOPIC_STEMS.len()];
    let ending = WORD_ENDINGS[j % WORD_ENDINGS.len()];
    let round = "x".repeat(t / TOPIC_STEMS.len() + j / WORD_ENDINGS.len());
    format!("{stem}{ending}{round}")
}

pub fn planted_corpus(spec: PlantedSpec) -> Planted {
    assert!(spec.topics >= 1 && spec.words_per_topic >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.topics * spec.words_per_topic;
    let mut docs: Vec<Vec<u32>> = Vec::with_capacity(spec.docs);
    let mut primary = Vec::with_capacity(spec.docs);
    let gamma = Gamma::new(spec.doc_topic_alpha, 1.0).expect("doc_topic_alpha must be positive");
    for _ in 0..spec.docs {
        let draws: Vec<f64> = (0..spec.topics).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let proportions: Vec<f64> = draws.iter().map(|g| g / total).collect();
        let doc = (0..spec.doc_len)
            .map(|_| {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let t = proportions
                    .iter()
                    .position(|p| {
                        cum += p;
                        u < cum
                    })
                    .unwrap_or(spec.topics - 1);
                (t * spec.words_per_topic + rng.random_range(0..spec.words_per_topic)) as u32
            })
            .collect();
        docs.push(doc);
        let main = (0..spec.topics)
            .max_by(|&a, &b| proportions[a].total_cmp(&proportions[b]).then(b.cmp(&a)))
            .expect("at least one topic");
        primary.push(main);
    }
    let mut words: Vec<(String, usize)> = (0..m)
        .map(|id| (planted_word(id / spec.words_per_topic, id % spec.words_per_topic), id))
        .collect();
    words.sort();
    let mut remap = vec![0u32; m];
    let mut word_topic = vec![0usize; m];
    for (new_id, (_, raw)) in words.iter().enumerate() {
        remap[*raw] = new_id as u32;
        word_topic[new_id] = raw / spec.words_per_topic;
    }
    for doc in &mut docs {
        for w in doc.iter_mut() {
            *w = remap[*w as usize];
        }
    }
    let ids = (0..spec.docs).map(|i| format!("doc{i:05}")).collect();
    let corpus = EncodedCorpus::new(docs, ids, m, "planted").expect("valid planted corpus");
    Planted {
        spec,
        corpus,
        words: words.into_iter().map(|(w, _)| w).collect(),
        word_topic,
        primary,
    }
}
