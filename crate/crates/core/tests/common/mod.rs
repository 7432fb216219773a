//! Oracles shared by the integration tests. Nothing here calls into the
//! sampler's own conditional or estimation code.

#![allow(dead_code)]

use topicmine::textprep::EncodedCorpus;

pub fn corpus(docs: Vec<Vec<u32>>, m: usize) -> EncodedCorpus {
    let ids = (0..docs.len()).map(|i| format!("d{i}")).collect();
    EncodedCorpus::new(docs, ids, m, "fixture").unwrap()
}

/// Γ(x + n) / Γ(x) for integer n ≥ 0.
fn rising(x: f64, n: u32) -> f64 {
    (0..n).map(|j| x + j as f64).product()
}

/// Collapsed joint P(w, z) up to a constant, by the Dirichlet-multinomial
/// closed form evaluated with rising factorials.
pub fn collapsed_joint(docs: &[Vec<u32>], z: &[Vec<u32>], k: usize, m: usize, alpha: f64, beta: f64) -> f64 {
    let mut n_wk = vec![vec![0u32; k]; m];
    let mut n_k = vec![0u32; k];
    let mut p = 1.0;
    for (doc, zd) in docs.iter().zip(z) {
        let mut n_dk = vec![0u32; k];
        for (&w, &t) in doc.iter().zip(zd) {
            n_wk[w as usize][t as usize] += 1;
            n_k[t as usize] += 1;
            n_dk[t as usize] += 1;
        }
        p /= rising(k as f64 * alpha, doc.len() as u32);
        for c in n_dk {
            p *= rising(alpha, c);
        }
    }
    for t in 0..k {
        p /= rising(m as f64 * beta, n_k[t]);
        for row in &n_wk {
            p *= rising(beta, row[t]);
        }
    }
    p
}

/// Every assignment of `n` tokens to `k` topics, in lexicographic order.
pub fn all_assignments(n: usize, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let total = (k as u64).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut z = vec![0u32; n];
        for slot in z.iter_mut().rev() {
            *slot = (c % k as u64) as u32;
            c /= k as u64;
        }
        out.push(z);
    }
    out
}

pub fn reshape(flat: &[u32], docs: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut it = flat.iter().copied();
    docs.iter().map(|d| d.iter().map(|_| it.next().unwrap()).collect()).collect()
}

/// Exact conditional of token `(d, i)` given all other assignments, by
/// normalizing the collapsed joint over that token's topic.
pub fn enumerated_conditional(
    docs: &[Vec<u32>],
    z: &[Vec<u32>],
    d: usize,
    i: usize,
    k: usize,
    m: usize,
    alpha: f64,
    beta: f64,
) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..k)
        .map(|t| {
            let mut zz = z.to_vec();
            zz[d][i] = t as u32;
            collapsed_joint(docs, &zz, k, m, alpha, beta)
        })
        .collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    weights
}

/// Largest total of `mass[t][perm[t]]` over all permutations, and the
/// permutation that attains it.
pub fn best_permutation(mass: &[Vec<f64>]) -> (Vec<usize>, f64) {
    fn go(row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, mass: &[Vec<f64>], best: &mut (Vec<usize>, f64), acc: f64) {
        if row == mass.len() {
            if acc > best.1 {
                *best = (cur.clone(), acc);
            }
            return;
        }
        for c in 0..mass[row].len() {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                go(row + 1, used, cur, mass, best, acc + mass[row][c]);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(0, &mut vec![false; mass[0].len()], &mut Vec::new(), mass, &mut best, 0.0);
    best
}

/// Full stable sort oracle: descending value, ascending key.
pub fn full_sort(keys: &[String], vals: &[f64], count: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = keys.iter().cloned().zip(vals.iter().copied()).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(count);
    all
}

use topicmine::codebook::{CodeBook, DeleteReason, Subtheme, Theme, TopicStatus};
use topicmine::lda::{Hyperparams, TopicModel, MODEL_FORMAT_VERSION};
use topicmine::report::{build_report_unchecked, TopicReport};

/// Retained topic labels in weight order (rank 1 first).
pub const RETAINED_LABELS: [&str; 23] = [
    "Unwanted Touching",
    "Assumptions/Exclusionary Practices",
    "Sexist Office Conversations",
    "Gender Discrimination",
    "Women are Inferior",
    "Reporting or Telling Someone about Harassment",
    "Women's Work",
    "Normalizing Sexism",
    "Sexualizing",
    "The Customer is Always Right",
    "Pay and Opportunity Inequity",
    "Job Interviews",
    "Refusing to Recognize Women's Competence or Authority",
    "Women's Place",
    "Service Industry",
    "Commuting",
    "Sexual Harassment and Assault",
    "Gender Inequality",
    "Traditional Family Roles",
    "Maternity Leave",
    "Gendered Honorifics",
    "Policing Women's Appearance",
    "Sexist Bullying",
];

/// Theme and subtheme for the retained topic at `rank` (1-based).
pub fn theme_for_rank(rank: usize) -> (Theme, Option<Subtheme>) {
    use Subtheme::*;
    use Theme::*;
    match rank {
        2 | 7 | 11 | 12 | 13 | 22 => (SexDiscrimination, None),
        3 | 4 | 5 | 8 | 14 | 18 | 21 | 23 => (SexDiscriminationAndGenderHarassment, Some(SexistHostility)),
        19 | 20 => (SexDiscriminationAndGenderHarassment, Some(WorkFamilyPolicing)),
        1 | 17 => (UnwantedSexualAttention, None),
        9 | 10 | 15 | 16 => (UnwantedSexualAttention, Some(SexualHostility)),
        6 => (UnwantedSexualAttention, Some(Reporting)),
        _ => panic!("rank {rank} is not a retained topic"),
    }
}

/// A 30-topic report whose topic `i` has rank `i + 1`.
pub fn thirty_topic_report() -> TopicReport {
    let k = 30;
    let m = 40;
    let n = 60;
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let raw: Vec<f64> = (0..m).map(|w| 1.0 + ((w * 7 + t * 13) % 17) as f64).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let theta: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            let raw: Vec<f64> = (0..k).map(|t| (k - t) as f64 * 10.0 + ((d * 3 + t) % 5) as f64).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let model = TopicModel {
        format_version: MODEL_FORMAT_VERSION,
        hyper: Hyperparams::with_k(k),
        vocab_fingerprint: "v".into(),
        corpus_fingerprint: "c".into(),
        phi,
        theta,
        z: None,
    };
    let vocab: Vec<String> = (0..m).map(|w| format!("w{w:02}")).collect();
    let ids: Vec<String> = (0..n).map(|d| format!("story{d:03}")).collect();
    build_report_unchecked(&model, &vocab, &ids, 10, 20).unwrap()
}

/// Three coders label every topic, seven topics are deleted (five
/// incoherent, two off scope), and the 23 survivors get consensus labels
/// and themes.
pub fn thirty_topic_codebook(report: &TopicReport) -> CodeBook {
    let mut cb = CodeBook::for_report(report);
    for c in ["coder_a", "coder_b", "coder_c"] {
        cb.register_coder(c).unwrap();
    }
    let by_rank = |r: usize| report.summaries[r - 1].topic_index;
    for rank in 1..=30 {
        let t = by_rank(rank);
        for c in ["coder_a", "coder_b", "coder_c"] {
            cb.record_coder_label(t, c, &format!("{c} view of T{rank}"), None).unwrap();
        }
    }
    for rank in 24..=28 {
        cb.set_topic_status(by_rank(rank), TopicStatus::Deleted, Some(DeleteReason::Incoherent)).unwrap();
    }
    for rank in 29..=30 {
        cb.set_topic_status(by_rank(rank), TopicStatus::Deleted, Some(DeleteReason::OffScope)).unwrap();
    }
    for (i, label) in RETAINED_LABELS.iter().enumerate() {
        let rank = i + 1;
        let t = by_rank(rank);
        let description = format!("Stories coded as {label}.");
        cb.record_consensus_label(t, label, Some(&description)).unwrap();
        let (theme, sub) = theme_for_rank(rank);
        cb.assign_theme(t, theme, sub).unwrap();
    }
    cb
}
