//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! The sampler keeps the usual three count tables (word-topic, document-topic
//! and per-topic totals) and resamples every token once per sweep, in
//! document order then position order, from
//!
//! ```text
//! P(z = t | rest) ∝ (n_wt[w] + β) / (n_t + mβ) · (n_dt[d] + α)
//! ```
//!
//! with the token's own assignment removed from the counts. All randomness
//! comes from one ChaCha8 stream seeded from [`Hyperparams::seed`], so a
//! `(corpus, hyperparams)` pair fully determines the fitted model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::textprep::EncodedCorpus;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Number of topics.
    pub k: usize,
    /// Total document-topic smoothing; each topic gets `alpha_sum / k`.
    pub alpha_sum: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 30,
            alpha_sum: 5.0,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn with_k(k: usize) -> Self {
        Hyperparams { k, ..Default::default() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_sum / self.k as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.alpha_sum > 0.0 && self.alpha_sum.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha_sum must be positive, got {}", self.alpha_sum)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unnormalized collapsed conditional for one token.
///
/// All counts must already exclude the token being resampled. `word_topic[t]`
/// is the count of the token's word in topic `t`, `topic_totals[t]` the
/// number of tokens in `t`, and `doc_topic[t]` the count of `t` in the
/// token's document.
pub fn collapsed_conditional(
    word_topic: &[u32],
    topic_totals: &[u32],
    doc_topic: &[u32],
    alpha: f64,
    beta: f64,
    vocab_size: usize,
    out: &mut [f64],
) {
    let beta_sum = beta * vocab_size as f64;
    for t in 0..out.len() {
        out[t] = (word_topic[t] as f64 + beta) / (topic_totals[t] as f64 + beta_sum)
            * (doc_topic[t] as f64 + alpha);
    }
}

/// Inverse-CDF draw from unnormalized weights; a draw landing exactly on a
/// cumulative boundary goes to the lower index.
pub(crate) fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (t, &w) in weights.iter().enumerate() {
        cum += w;
        if u <= cum {
            return t;
        }
    }
    weights.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    hyper: Hyperparams,
    vocab_size: usize,
    words: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    /// Row-major `vocab_size × k`.
    n_wk: Vec<u32>,
    /// Row-major `num_docs × k`.
    n_dk: Vec<u32>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    sweep_count: usize,
    scratch: Vec<f64>,
}

impl SamplerState {
    /// Assigns every token a uniformly random topic drawn from the seeded stream.
    pub fn init(ec: &EncodedCorpus, h: &Hyperparams) -> Result<Self> {
        h.validate()?;
        if ec.vocab_size == 0 {
            return Err(Error::InvalidParameter("vocabulary is empty".into()));
        }
        if ec.num_docs() == 0 {
            return Err(Error::EmptyCorpus);
        }
        if h.k > ec.total_tokens {
            log::warn!(
                "k = {} exceeds the {} tokens in the corpus; some topics will stay empty",
                h.k,
                ec.total_tokens
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
        let z = ec
            .docs
            .iter()
            .map(|doc| doc.iter().map(|_| rng.random_range(0..h.k as u32)).collect())
            .collect();
        Self::assemble(ec, h, z, rng)
    }

    /// Builds a state from explicit assignments (used for resuming and for
    /// constructing exact test instances).
    pub fn from_assignments(ec: &EncodedCorpus, h: &Hyperparams, z: Vec<Vec<u32>>) -> Result<Self> {
        h.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(h.seed);
        Self::assemble(ec, h, z, rng)
    }

    fn assemble(ec: &EncodedCorpus, h: &Hyperparams, z: Vec<Vec<u32>>, rng: ChaCha8Rng) -> Result<Self> {
        let k = h.k;
        if z.len() != ec.num_docs() {
            return Err(Error::InvalidParameter("assignments do not match corpus shape".into()));
        }
        let mut n_wk = vec![0u32; ec.vocab_size * k];
        let mut n_dk = vec![0u32; ec.num_docs() * k];
        let mut n_k = vec![0u32; k];
        for (d, (doc, zd)) in ec.docs.iter().zip(&z).enumerate() {
            if doc.len() != zd.len() {
                return Err(Error::InvalidParameter(format!("assignments for document {d} have the wrong length")));
            }
            for (&w, &t) in doc.iter().zip(zd) {
                let t = t as usize;
                if t >= k {
                    return Err(Error::InvalidParameter(format!("topic {t} out of range for k = {k}")));
                }
                n_wk[w as usize * k + t] += 1;
                n_dk[d * k + t] += 1;
                n_k[t] += 1;
            }
        }
        Ok(SamplerState {
            hyper: *h,
            vocab_size: ec.vocab_size,
            words: ec.docs.clone(),
            z,
            n_wk,
            n_dk,
            n_k,
            rng,
            sweep_count: 0,
            scratch: vec![0.0; k],
        })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn num_topics(&self) -> usize {
        self.hyper.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_docs(&self) -> usize {
        self.words.len()
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    pub fn sweep_count(&self) -> usize {
        self.sweep_count
    }

    pub fn word_topic(&self, w: usize) -> &[u32] {
        let k = self.hyper.k;
        &self.n_wk[w * k..(w + 1) * k]
    }

    pub fn doc_topic(&self, d: usize) -> &[u32] {
        let k = self.hyper.k;
        &self.n_dk[d * k..(d + 1) * k]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.n_k
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.words[d].len()
    }

    /// Normalized conditional over topics for token `pos` of document `doc`,
    /// with that token's current assignment removed from the counts.
    pub fn conditional_distribution(&self, doc: usize, pos: usize) -> Result<Vec<f64>> {
        let w = *self
            .words
            .get(doc)
            .and_then(|d| d.get(pos))
            .ok_or(Error::OutOfRange { doc, pos })? as usize;
        let current = self.z[doc][pos] as usize;
        let mut word_topic = self.word_topic(w).to_vec();
        let mut totals = self.n_k.clone();
        let mut doc_topic = self.doc_topic(doc).to_vec();
        word_topic[current] -= 1;
        totals[current] -= 1;
        doc_topic[current] -= 1;
        let mut p = vec![0.0; self.hyper.k];
        collapsed_conditional(
            &word_topic,
            &totals,
            &doc_topic,
            self.hyper.alpha(),
            self.hyper.beta,
            self.vocab_size,
            &mut p,
        );
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        Ok(p)
    }

    /// Resamples every token once.
    pub fn sweep(&mut self) {
        let k = self.hyper.k;
        let alpha = self.hyper.alpha();
        let beta = self.hyper.beta;
        let beta_sum = beta * self.vocab_size as f64;
        for d in 0..self.words.len() {
            let doc_row = d * k;
            for i in 0..self.words[d].len() {
                let w = self.words[d][i] as usize;
                let word_row = w * k;
                let old = self.z[d][i] as usize;
                self.n_wk[word_row + old] -= 1;
                self.n_dk[doc_row + old] -= 1;
                self.n_k[old] -= 1;

                for t in 0..k {
                    self.scratch[t] = (self.n_wk[word_row + t] as f64 + beta)
                        / (self.n_k[t] as f64 + beta_sum)
                        * (self.n_dk[doc_row + t] as f64 + alpha);
                }
                let new = sample_index(&self.scratch, &mut self.rng);

                self.z[d][i] = new as u32;
                self.n_wk[word_row + new] += 1;
                self.n_dk[doc_row + new] += 1;
                self.n_k[new] += 1;
            }
        }
        self.sweep_count += 1;
    }

    /// Posterior-mean point estimates `(phi, theta)` from the current counts.
    pub fn estimate_distributions(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let k = self.hyper.k;
        let alpha = self.hyper.alpha();
        let beta = self.hyper.beta;
        let m = self.vocab_size;
        let phi = (0..k)
            .map(|t| {
                let denom = self.n_k[t] as f64 + m as f64 * beta;
                (0..m).map(|w| (self.n_wk[w * k + t] as f64 + beta) / denom).collect()
            })
            .collect();
        let theta = (0..self.words.len())
            .map(|d| {
                let denom = self.words[d].len() as f64 + k as f64 * alpha;
                self.doc_topic(d).iter().map(|&c| (c as f64 + alpha) / denom).collect()
            })
            .collect();
        (phi, theta)
    }

    /// Corpus log-probability under the current point estimates,
    /// `Σ_d Σ_i log Σ_t theta[d][t] · phi[t][w]`.
    pub fn log_probability(&self) -> f64 {
        let (phi, theta) = self.estimate_distributions();
        corpus_log_probability(&self.words, &phi, &theta)
    }
}

pub(crate) fn corpus_log_probability(docs: &[Vec<u32>], phi: &[Vec<f64>], theta: &[Vec<f64>]) -> f64 {
    docs.iter()
        .zip(theta)
        .map(|(doc, th)| {
            doc.iter()
                .map(|&w| {
                    th.iter()
                        .zip(phi)
                        .map(|(p, row)| p * row[w as usize])
                        .sum::<f64>()
                        .ln()
                })
                .sum::<f64>()
        })
        .sum()
}

/// A fitted model: `phi[t][w] = P(w | t)` and `theta[d][t] = P(t | d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub format_version: u32,
    pub hyper: Hyperparams,
    pub vocab_fingerprint: String,
    pub corpus_fingerprint: String,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<u32>>>,
}

impl TopicModel {
    pub fn from_state(state: &SamplerState, ec: &EncodedCorpus) -> Self {
        let (phi, theta) = state.estimate_distributions();
        TopicModel {
            format_version: MODEL_FORMAT_VERSION,
            hyper: state.hyper,
            vocab_fingerprint: ec.vocab_fingerprint.clone(),
            corpus_fingerprint: ec.fingerprint(),
            phi,
            theta,
            z: None,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn num_docs(&self) -> usize {
        self.theta.len()
    }

    /// Column `t` of theta: `P(t | d)` for every document.
    pub fn topic_column(&self, t: usize) -> Vec<f64> {
        self.theta.iter().map(|row| row[t]).collect()
    }

    /// Reorders topics so that new topic `i` is old topic `order[i]`.
    pub fn permute_topics(&self, order: &[usize]) -> TopicModel {
        let mut out = self.clone();
        out.phi = order.iter().map(|&t| self.phi[t].clone()).collect();
        out.theta = self
            .theta
            .iter()
            .map(|row| order.iter().map(|&t| row[t]).collect())
            .collect();
        out.z = None;
        out
    }

    /// Checks that every phi and theta row sums to one within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        for (name, rows) in [("phi", &self.phi), ("theta", &self.theta)] {
            for (i, row) in rows.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > tol {
                    return Err(Error::InvalidParameter(format!("{name} row {i} sums to {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("topic-model/v1");
        fp.str(&self.vocab_fingerprint)
            .str(&self.corpus_fingerprint)
            .u64(self.hyper.k as u64)
            .u64(self.hyper.alpha_sum.to_bits())
            .u64(self.hyper.beta.to_bits())
            .u64(self.hyper.iterations as u64)
            .u64(self.hyper.seed);
        for row in self.phi.iter().chain(&self.theta) {
            for x in row {
                fp.u64(x.to_bits());
            }
        }
        fp.finish()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let model: TopicModel = serde_json::from_str(raw)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(model.format_version));
        }
        Ok(model)
    }
}

pub fn init_state(ec: &EncodedCorpus, h: &Hyperparams) -> Result<SamplerState> {
    SamplerState::init(ec, h)
}

pub fn gibbs_sweep(state: &mut SamplerState) {
    state.sweep()
}

pub fn estimate_distributions(state: &SamplerState) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    state.estimate_distributions()
}

pub fn train(ec: &EncodedCorpus, h: &Hyperparams) -> Result<TopicModel> {
    train_with(ec, h, |_| {})
}

/// Like [`train`], calling `on_sweep` after every completed sweep.
pub fn train_with(ec: &EncodedCorpus, h: &Hyperparams, mut on_sweep: impl FnMut(&SamplerState)) -> Result<TopicModel> {
    let mut state = SamplerState::init(ec, h)?;
    for _ in 0..h.iterations {
        state.sweep();
        on_sweep(&state);
    }
    Ok(TopicModel::from_state(&state, ec))
}
