//! Corpus-to-codebook topic mining.
//!
//! The pipeline runs in stages, each producing a file artifact whose
//! fingerprint is chained into the next stage:
//!
//! 1. [`corpus_io`] loads and filters story corpora (CSV, JSON-lines, or a
//!    directory of text files).
//! 2. [`textprep`] tokenizes into lowercase letter-run unigrams, removes
//!    stopwords, and encodes documents against a sorted vocabulary.
//! 3. [`lda`] fits latent Dirichlet allocation by collapsed Gibbs sampling.
//! 4. [`model_select`] picks the topic count by held-out log-likelihood.
//! 5. [`report`] ranks topics by normalized weight and lists top words and
//!    top documents per topic.
//! 6. [`codebook`] records the human coding phase: per-coder labels,
//!    deletions, consensus labels and theme grouping.
//!
//! [`service`] exposes reports and codebook mutations over HTTP and
//! [`pipeline`] drives the stages from the command line.

pub mod codebook;
pub mod corpus_io;
pub mod error;
pub mod fingerprint;
pub mod lda;
pub mod model_select;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod synthetic;
pub mod textprep;

pub use error::{Error, Result};
