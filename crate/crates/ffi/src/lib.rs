//! C ABI over the topicmine library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `tm_*_free`. Every fallible call returns a [`TmStatus`]; on
//! failure the message is available from [`tm_last_error_message`] on the
//! same thread until the next failing call. Strings returned to the caller
//! are owned by the caller and released with [`tm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use topicmine::corpus_io::{self, CorpusFormat, DocumentSet};
use topicmine::lda::{self, Hyperparams, TopicModel};
use topicmine::model_select::{self, FoldIn};
use topicmine::report::{self, TopicReport};
use topicmine::textprep::{self, EncodedCorpus, PrepRules, Vocabulary};
use topicmine::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Malformed = 4,
    InvalidParameter = 5,
    EmptyCorpus = 6,
    FingerprintMismatch = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Other = 10,
    Panic = 11,
}

impl From<&Error> for TmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::MissingArtifact(_) => TmStatus::Io,
            Error::Malformed { .. } | Error::Json(_) | Error::Csv(_) | Error::FormatVersion(_) => TmStatus::Malformed,
            Error::InvalidParameter(_) | Error::TooFewDocuments(_) => TmStatus::InvalidParameter,
            Error::EmptyCorpus | Error::DegenerateCorpus | Error::EmptyText(_) => TmStatus::EmptyCorpus,
            Error::FingerprintMismatch { .. } => TmStatus::FingerprintMismatch,
            Error::OutOfRange { .. } | Error::UnknownTopic { .. } => TmStatus::OutOfRange,
            _ => TmStatus::Other,
        }
    }
}

/// Sampler settings passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TmHyperparams {
    pub k: usize,
    pub alpha_sum: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl From<TmHyperparams> for Hyperparams {
    fn from(h: TmHyperparams) -> Self {
        Hyperparams {
            k: h.k,
            alpha_sum: h.alpha_sum,
            beta: h.beta,
            iterations: h.iterations,
            seed: h.seed,
        }
    }
}

/// A loaded document set.
pub struct TmCorpus(DocumentSet);

/// A vocabulary together with the corpus encoded against it.
pub struct TmPrepared {
    vocab: Vocabulary,
    encoded: EncodedCorpus,
}

/// A trained topic model.
pub struct TmModel(TopicModel);

/// A ranked topic report.
pub struct TmReport(TopicReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(TmStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, turning errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> TmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            TmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TmStatus::NullArgument, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(TmStatus::Other, "string contains an interior NUL".into()))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Last error message on this thread, or null if none. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default sampler settings with `k` topics.
#[no_mangle]
pub extern "C" fn tm_hyperparams_default(k: usize) -> TmHyperparams {
    let h = Hyperparams::with_k(k);
    TmHyperparams {
        k: h.k,
        alpha_sum: h.alpha_sum,
        beta: h.beta,
        iterations: h.iterations,
        seed: h.seed,
    }
}

/// Loads a corpus. `format` is `"csv"`, `"jsonl"`, `"txt-dir"`, or null to
/// infer it from the path.
///
/// # Safety
/// `path` and `format` must be null or NUL-terminated strings; `out` must be
/// null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_corpus_load(path: *const c_char, format: *const c_char, out: *mut *mut TmCorpus) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = Path::new(string_arg(path, "path")?);
        let format = if format.is_null() {
            CorpusFormat::infer(path)
        } else {
            string_arg(format, "format")?
                .parse()
                .map_err(|e: Error| Failure(TmStatus::InvalidParameter, e.to_string()))?
        };
        *out = boxed(TmCorpus(corpus_io::load_corpus(path, format)?));
        Ok(())
    })
}

/// Number of documents in a corpus, or 0 for null.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_corpus_len(corpus: *const TmCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// New corpus holding the documents that carry `tag`, in original order.
///
/// # Safety
/// `corpus` must be a live handle, `tag` a NUL-terminated string and `out`
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_corpus_filter(corpus: *const TmCorpus, tag: *const c_char, out: *mut *mut TmCorpus) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let corpus = borrow(corpus, "corpus")?;
        let tag = string_arg(tag, "tag")?;
        *out = boxed(TmCorpus(corpus_io::filter_documents(&corpus.0, tag)?));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_corpus_free(corpus: *mut TmCorpus) {
    free(corpus)
}

/// Tokenizes the corpus with the default stoplist and `min_token_len`,
/// builds the vocabulary and encodes every document.
///
/// # Safety
/// `corpus` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_prepare(corpus: *const TmCorpus, min_token_len: usize, out: *mut *mut TmPrepared) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let corpus = borrow(corpus, "corpus")?;
        let rules = PrepRules {
            min_token_len,
            ..PrepRules::default()
        };
        let vocab = textprep::build_vocabulary(&corpus.0, &rules)?;
        let encoded = textprep::encode_corpus(&corpus.0, &vocab, &rules)?;
        *out = boxed(TmPrepared { vocab, encoded });
        Ok(())
    })
}

/// Encodes another corpus against an existing vocabulary, for held-out
/// scoring. Tokens missing from the vocabulary are an error.
///
/// # Safety
/// `prepared` and `corpus` must be live handles and `out` writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_prepare_with_vocabulary(
    prepared: *const TmPrepared,
    corpus: *const TmCorpus,
    min_token_len: usize,
    out: *mut *mut TmPrepared,
) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let prepared = borrow(prepared, "prepared")?;
        let corpus = borrow(corpus, "corpus")?;
        let rules = PrepRules {
            min_token_len,
            ..PrepRules::default()
        };
        let encoded = textprep::encode_corpus(&corpus.0, &prepared.vocab, &rules)?;
        *out = boxed(TmPrepared {
            vocab: prepared.vocab.clone(),
            encoded,
        });
        Ok(())
    })
}

/// Vocabulary size, or 0 for null.
///
/// # Safety
/// `prepared` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_prepared_vocab_size(prepared: *const TmPrepared) -> usize {
    prepared.as_ref().map_or(0, |p| p.vocab.len())
}

/// Total token count, or 0 for null.
///
/// # Safety
/// `prepared` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_prepared_num_tokens(prepared: *const TmPrepared) -> usize {
    prepared.as_ref().map_or(0, |p| p.encoded.total_tokens)
}

/// Copies word `index` of the vocabulary into a new caller-owned string.
///
/// # Safety
/// `prepared` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_prepared_word(prepared: *const TmPrepared, index: usize, out: *mut *mut c_char) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let prepared = borrow(prepared, "prepared")?;
        let word = u32::try_from(index)
            .ok()
            .and_then(|i| prepared.vocab.word(i))
            .ok_or_else(|| Failure(TmStatus::OutOfRange, format!("word {index} of {}", prepared.vocab.len())))?;
        *out = to_c_string(word.to_string())?;
        Ok(())
    })
}

/// # Safety
/// `prepared` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_prepared_free(prepared: *mut TmPrepared) {
    free(prepared)
}

/// Trains a model on a prepared corpus.
///
/// # Safety
/// `prepared` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_train(prepared: *const TmPrepared, hyper: TmHyperparams, out: *mut *mut TmModel) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let prepared = borrow(prepared, "prepared")?;
        *out = boxed(TmModel(lda::train(&prepared.encoded, &hyper.into())?));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_num_topics(model: *const TmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_topics())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_vocab_size(model: *const TmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.vocab_size())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_num_docs(model: *const TmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_docs())
}

unsafe fn copy_matrix(rows: &[Vec<f64>], buf: *mut f64, len: usize) -> FfiResult<()> {
    let needed: usize = rows.iter().map(Vec::len).sum();
    if len < needed {
        return Err(Failure(TmStatus::BufferTooSmall, format!("need {needed} values, buffer holds {len}")));
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    let dst = std::slice::from_raw_parts_mut(buf, needed);
    let mut at = 0;
    for row in rows {
        dst[at..at + row.len()].copy_from_slice(row);
        at += row.len();
    }
    Ok(())
}

/// Copies phi (topics × vocabulary, row-major) into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tm_model_copy_phi(model: *const TmModel, buf: *mut f64, len: usize) -> TmStatus {
    guard(|| copy_matrix(&borrow(model, "model")?.0.phi, buf, len))
}

/// Copies theta (documents × topics, row-major) into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tm_model_copy_theta(model: *const TmModel, buf: *mut f64, len: usize) -> TmStatus {
    guard(|| copy_matrix(&borrow(model, "model")?.0.theta, buf, len))
}

/// Serializes the model to a new caller-owned JSON string.
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_model_to_json(model: *const TmModel, out: *mut *mut c_char) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = to_c_string(borrow(model, "model")?.0.to_json()?)?;
        Ok(())
    })
}

/// Parses a model serialized by [`tm_model_to_json`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_model_from_json(json: *const c_char, out: *mut *mut TmModel) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(TmModel(TopicModel::from_json(string_arg(json, "json")?)?));
        Ok(())
    })
}

/// Held-out log-likelihood of `test` under `model` by document completion.
///
/// # Safety
/// `model` and `test` must be live handles; `out_total` and `out_per_word`
/// must point to writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tm_model_heldout(
    model: *const TmModel,
    test: *const TmPrepared,
    sweeps: usize,
    burn: usize,
    seed: u64,
    out_total: *mut f64,
    out_per_word: *mut f64,
) -> TmStatus {
    guard(|| {
        let total = out_ptr(out_total, "out_total")?;
        let per_word = out_ptr(out_per_word, "out_per_word")?;
        let model = borrow(model, "model")?;
        let test = borrow(test, "test")?;
        let held = model_select::heldout_log_likelihood(&model.0, &test.encoded, &FoldIn { sweeps, burn, seed })?;
        *total = held.total;
        *per_word = held.per_word;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_model_free(model: *mut TmModel) {
    free(model)
}

/// Ranks topics by weight and collects top words and documents.
///
/// # Safety
/// `model` and `prepared` must be live handles and `out` writable storage for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_report_build(
    model: *const TmModel,
    prepared: *const TmPrepared,
    top_words: usize,
    top_docs: usize,
    out: *mut *mut TmReport,
) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = borrow(model, "model")?;
        let prepared = borrow(prepared, "prepared")?;
        let rep = report::build_report(&model.0, &prepared.vocab, &prepared.encoded, top_words, top_docs)?;
        *out = boxed(TmReport(rep));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_report_num_topics(report: *const TmReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.num_topics())
}

/// Topic index and weight at 1-based `rank`.
///
/// # Safety
/// `report` must be a live handle; `out_topic` and `out_weight` must point to
/// writable storage.
#[no_mangle]
pub unsafe extern "C" fn tm_report_at_rank(
    report: *const TmReport,
    rank: usize,
    out_topic: *mut usize,
    out_weight: *mut f64,
) -> TmStatus {
    guard(|| {
        let topic = out_ptr(out_topic, "out_topic")?;
        let weight = out_ptr(out_weight, "out_weight")?;
        let rep = &borrow(report, "report")?.0;
        let s = rank
            .checked_sub(1)
            .and_then(|i| rep.summaries.get(i))
            .ok_or_else(|| Failure(TmStatus::OutOfRange, format!("rank {rank} of {}", rep.num_topics())))?;
        *topic = s.topic_index;
        *weight = s.weight;
        Ok(())
    })
}

/// Serializes the report to a new caller-owned JSON string.
///
/// # Safety
/// `report` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_report_to_json(report: *const TmReport, out: *mut *mut c_char) -> TmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let rep = &borrow(report, "report")?.0;
        *out = to_c_string(serde_json::to_string_pretty(rep).map_err(Error::from)?)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tm_report_free(report: *mut TmReport) {
    free(report)
}
