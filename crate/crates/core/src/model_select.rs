//! Choosing the number of topics by held-out log-likelihood.
//!
//! The corpus is split by document into train and test parts. A model is
//! trained on the train part for each candidate `k`; test documents are then
//! folded in by Gibbs-sampling their topic assignments against the frozen
//! topic-word distributions, and scored by
//! `Σ_d Σ_i log Σ_t theta_d[t] · phi[t][w_di]`. The `k` with the highest
//! total wins, ties going to the smaller `k`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::{self, corpus_log_probability, Hyperparams, TopicModel};
use crate::textprep::EncodedCorpus;

pub const DEFAULT_GRID: [usize; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldIn {
    pub sweeps: usize,
    pub burn: usize,
    pub seed: u64,
}

impl Default for FoldIn {
    fn default() -> Self {
        FoldIn {
            sweeps: 200,
            burn: 100,
            seed: 0,
        }
    }
}

/// Partitions documents into `(train, test)`; each part keeps the original
/// relative order.
pub fn split_corpus(ec: &EncodedCorpus, spec: &SplitSpec) -> Result<(EncodedCorpus, EncodedCorpus)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let nonempty = ec.docs.iter().filter(|d| !d.is_empty()).count();
    if nonempty < 2 {
        return Err(Error::TooFewDocuments(format!(
            "need at least 2 nonempty documents to split, found {nonempty}"
        )));
    }
    let n = ec.num_docs();
    let n_train = ((n as f64 * spec.train_fraction).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ec.subset(train), ec.subset(test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub total: f64,
    pub per_word: f64,
    pub tokens: usize,
}

/// Document-completion estimate of the test set's log-likelihood under
/// `model`.
///
/// Each test document is split by token position: even positions are folded
/// in with phi frozen to estimate the document's theta, odd positions are
/// scored. Scoring the same tokens that produced theta would reward larger
/// k for memorizing each document. Each document gets its own ChaCha8 stream
/// (the fold-in seed with the document index as stream id), so documents are
/// scored independently and in parallel with a deterministic result.
pub fn heldout_log_likelihood(model: &TopicModel, test: &EncodedCorpus, foldin: &FoldIn) -> Result<HeldOut> {
    if model.vocab_fingerprint != test.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "vocabulary",
            expected: model.vocab_fingerprint.clone(),
            found: test.vocab_fingerprint.clone(),
        });
    }
    if test.vocab_size != model.vocab_size() {
        return Err(Error::InvalidParameter(format!(
            "test vocabulary has {} words, model has {}",
            test.vocab_size,
            model.vocab_size()
        )));
    }
    if test.total_tokens == 0 {
        return Err(Error::InvalidParameter("empty test set".into()));
    }
    if foldin.burn >= foldin.sweeps {
        return Err(Error::InvalidParameter(format!(
            "fold-in burn ({}) must be less than sweeps ({})",
            foldin.burn, foldin.sweeps
        )));
    }
    let (observed, scored): (Vec<Vec<u32>>, Vec<Vec<u32>>) = test.docs.iter().map(|d| split_tokens(d)).unzip();
    let tokens: usize = scored.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::InvalidParameter(
            "no test document has the two tokens needed for document completion".into(),
        ));
    }
    let k = model.num_topics();
    let alpha = model.hyper.alpha();
    let theta: Vec<Vec<f64>> = observed
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let mut rng = ChaCha8Rng::seed_from_u64(foldin.seed);
            rng.set_stream(d as u64);
            fold_in_document(doc, &model.phi, alpha, k, foldin, &mut rng)
        })
        .collect();
    let total = corpus_log_probability(&scored, &model.phi, &theta);
    Ok(HeldOut {
        total,
        per_word: total / tokens as f64,
        tokens,
    })
}

/// `(even positions, odd positions)` of a document.
fn split_tokens(doc: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let observed = doc.iter().step_by(2).copied().collect();
    let scored = doc.iter().skip(1).step_by(2).copied().collect();
    (observed, scored)
}

fn fold_in_document(
    doc: &[u32],
    phi: &[Vec<f64>],
    alpha: f64,
    k: usize,
    foldin: &FoldIn,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut n_t = vec![0u32; k];
    let mut z: Vec<usize> = doc
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            n_t[t] += 1;
            t
        })
        .collect();
    let mut acc = vec![0u64; k];
    let mut weights = vec![0.0; k];
    for sweep in 0..foldin.sweeps {
        for (i, &w) in doc.iter().enumerate() {
            n_t[z[i]] -= 1;
            for t in 0..k {
                weights[t] = phi[t][w as usize] * (n_t[t] as f64 + alpha);
            }
            let t = lda::sample_index(&weights, rng);
            z[i] = t;
            n_t[t] += 1;
        }
        if sweep >= foldin.burn {
            for t in 0..k {
                acc[t] += n_t[t] as u64;
            }
        }
    }
    let kept = (foldin.sweeps - foldin.burn) as f64;
    let denom = doc.len() as f64 + k as f64 * alpha;
    acc.iter().map(|&c| (c as f64 / kept + alpha) / denom).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub total_loglik: f64,
    pub per_word_loglik: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<usize>,
    pub points: Vec<SweepPoint>,
    pub chosen_k: usize,
}

impl SweepResult {
    fn from_points(points: Vec<SweepPoint>) -> Self {
        let mut best = &points[0];
        for p in &points[1..] {
            if p.total_loglik > best.total_loglik {
                best = p;
            }
        }
        SweepResult {
            grid: points.iter().map(|p| p.k).collect(),
            chosen_k: best.k,
            points,
        }
    }

    /// `k,total_loglik,per_word_loglik,seed` rows and a `# chosen_k=` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,total_loglik,per_word_loglik,seed\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.k, p.total_loglik, p.per_word_loglik, p.seed);
        }
        let _ = writeln!(out, "# chosen_k={}", self.chosen_k);
        out
    }

    /// Line plot of total held-out log-likelihood against `k`.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 60.0);
        let ks: Vec<f64> = self.points.iter().map(|p| p.k as f64).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.total_loglik).collect();
        let (kmin, kmax) = bounds(&ks);
        let (ymin, ymax) = bounds(&ys);
        let sx = |k: f64| pad + (k - kmin) / (kmax - kmin) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\" font-size=\"14\">number of topics</text>\n\
             <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 {cy})\">held-out log-likelihood</text>\n",
            b = h - pad,
            r = w - pad,
            cx = w / 2.0,
            ly = h - 15.0,
            cy = h / 2.0,
        );
        let path: Vec<String> = ks
            .iter()
            .zip(&ys)
            .map(|(&k, &y)| format!("{:.2},{:.2}", sx(k), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        for (p, (&k, &y)) in self.points.iter().zip(ks.iter().zip(&ys)) {
            let fill = if p.k == self.chosen_k { "crimson" } else { "steelblue" };
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\"/>\n<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
                sx(k),
                sy(y),
                sx(k),
                h - pad + 16.0,
                p.k
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// A grid sweep that stopped at a failing grid point.
#[derive(Debug)]
pub struct SweepAbort {
    pub completed: Vec<SweepPoint>,
    pub failed_k: usize,
    pub error: Error,
}

impl std::fmt::Display for SweepAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "grid point k = {} failed after {} completed: {}",
            self.failed_k,
            self.completed.len(),
            self.error
        )
    }
}

impl std::error::Error for SweepAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Parses `start:stop:step` (inclusive stop) or a comma-separated list.
pub fn parse_grid(raw: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("invalid grid {raw:?}"));
    let grid: Vec<usize> = if raw.contains(':') {
        let parts: Vec<usize> = raw
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (start, stop, step) = match parts.as_slice() {
            [a, b] => (*a, *b, 1),
            [a, b, c] => (*a, *b, *c),
            _ => return Err(bad()),
        };
        if step == 0 || start > stop {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        raw.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "grid must be strictly increasing positive topic counts, got {grid:?}"
        )));
    }
    Ok(())
}

/// Seed used for grid point `k`.
pub fn grid_seed(base: u64, k: usize) -> u64 {
    base ^ k as u64
}

/// Trains and scores one model per grid point. Grid points run in parallel;
/// the result is identical to a serial run.
pub fn sweep_topic_counts(
    ec: &EncodedCorpus,
    grid: &[usize],
    spec: &SplitSpec,
    h_base: &Hyperparams,
    foldin: &FoldIn,
) -> std::result::Result<SweepResult, SweepAbort> {
    let abort = |error| SweepAbort {
        completed: Vec::new(),
        failed_k: grid.first().copied().unwrap_or(0),
        error,
    };
    validate_grid(grid).map_err(abort)?;
    let (train, test) = split_corpus(ec, spec).map_err(abort)?;
    let outcomes: Vec<Result<SweepPoint>> = grid
        .par_iter()
        .map(|&k| evaluate_point(&train, &test, k, h_base, foldin))
        .collect();
    let mut points = Vec::with_capacity(grid.len());
    for (outcome, &k) in outcomes.into_iter().zip(grid) {
        match outcome {
            Ok(p) => points.push(p),
            Err(error) => {
                return Err(SweepAbort {
                    completed: points,
                    failed_k: k,
                    error,
                })
            }
        }
    }
    Ok(SweepResult::from_points(points))
}

fn evaluate_point(
    train: &EncodedCorpus,
    test: &EncodedCorpus,
    k: usize,
    h_base: &Hyperparams,
    foldin: &FoldIn,
) -> Result<SweepPoint> {
    let seed = grid_seed(h_base.seed, k);
    let h = Hyperparams { k, seed, ..*h_base };
    let model = lda::train(train, &h)?;
    let held = heldout_log_likelihood(&model, test, &FoldIn { seed, ..*foldin })?;
    log::info!("k = {k}: held-out log-likelihood {:.3} ({:.5} per word)", held.total, held.per_word);
    Ok(SweepPoint {
        k,
        total_loglik: held.total,
        per_word_loglik: held.per_word,
        seed,
    })
}
