use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use topicmine::corpus_io::{persist_corpus, CorpusFormat, Document, DocumentSet};
use topicmine_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = tm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_fixture(dir: &Path) -> PathBuf {
    let texts = [
        ("a1", "cat dog cat bird dog cat", "pets"),
        ("a2", "dog cat bird cat dog", "pets"),
        ("a3", "cat bird bird dog", "pets"),
        ("b1", "rain snow wind rain", "weather"),
        ("b2", "snow wind rain snow", "weather"),
        ("b3", "wind rain snow wind cat", "weather"),
    ];
    let docs = texts.iter().map(|(id, text, tag)| Document::new(*id, *text).with_tags([*tag])).collect();
    let path = dir.join("fixture.csv");
    persist_corpus(&DocumentSet::new(docs).unwrap(), &path, CorpusFormat::Csv).unwrap();
    path
}

struct Handles {
    corpus: *mut TmCorpus,
    prepared: *mut TmPrepared,
    model: *mut TmModel,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            tm_model_free(self.model);
            tm_prepared_free(self.prepared);
            tm_corpus_free(self.corpus);
        }
    }
}

fn trained(dir: &Path, k: usize) -> Handles {
    let path = c(write_fixture(dir).to_str().unwrap());
    let mut h = Handles {
        corpus: ptr::null_mut(),
        prepared: ptr::null_mut(),
        model: ptr::null_mut(),
    };
    unsafe {
        assert_eq!(tm_corpus_load(path.as_ptr(), ptr::null(), &mut h.corpus), TmStatus::Ok);
        assert_eq!(tm_prepare(h.corpus, 2, &mut h.prepared), TmStatus::Ok);
        let mut hyper = tm_hyperparams_default(k);
        hyper.iterations = 50;
        hyper.seed = 3;
        assert_eq!(tm_train(h.prepared, hyper, &mut h.model), TmStatus::Ok);
    }
    h
}

#[test]
fn corpus_load_filter_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(write_fixture(dir.path()).to_str().unwrap());
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(tm_corpus_load(path.as_ptr(), c("csv").as_ptr(), &mut corpus), TmStatus::Ok);
        assert_eq!(tm_corpus_len(corpus), 6);
        let mut pets = ptr::null_mut();
        assert_eq!(tm_corpus_filter(corpus, c("pets").as_ptr(), &mut pets), TmStatus::Ok);
        assert_eq!(tm_corpus_len(pets), 3);
        tm_corpus_free(pets);
        tm_corpus_free(corpus);

        let mut missing = ptr::null_mut();
        let nowhere = c(dir.path().join("nowhere.csv").to_str().unwrap());
        assert_eq!(tm_corpus_load(nowhere.as_ptr(), ptr::null(), &mut missing), TmStatus::Io);
        assert!(missing.is_null());
        assert!(last_error().contains("nowhere.csv"));
        assert_eq!(tm_corpus_load(path.as_ptr(), c("xml").as_ptr(), &mut missing), TmStatus::InvalidParameter);
        assert_eq!(tm_corpus_load(ptr::null(), ptr::null(), &mut missing), TmStatus::NullArgument);
        assert_eq!(tm_corpus_load(path.as_ptr(), ptr::null(), ptr::null_mut()), TmStatus::NullArgument);
        assert_eq!(tm_corpus_len(ptr::null()), 0);
        tm_corpus_free(ptr::null_mut());
    }
}

#[test]
fn vocabulary_is_sorted_and_indexable() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 2);
    unsafe {
        let m = tm_prepared_vocab_size(h.prepared);
        assert_eq!(m, 6);
        assert_eq!(tm_prepared_num_tokens(h.prepared), 28);
        let mut words = Vec::new();
        for i in 0..m {
            let mut s = ptr::null_mut();
            assert_eq!(tm_prepared_word(h.prepared, i, &mut s), TmStatus::Ok);
            words.push(CStr::from_ptr(s).to_str().unwrap().to_string());
            tm_string_free(s);
        }
        assert_eq!(words, ["bird", "cat", "dog", "rain", "snow", "wind"]);
        let mut s = ptr::null_mut();
        assert_eq!(tm_prepared_word(h.prepared, m, &mut s), TmStatus::OutOfRange);
    }
}

#[test]
fn model_matrices_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 2);
    unsafe {
        let (k, m, n) = (tm_model_num_topics(h.model), tm_model_vocab_size(h.model), tm_model_num_docs(h.model));
        assert_eq!((k, m, n), (2, 6, 6));
        let mut phi = vec![0.0; k * m];
        assert_eq!(tm_model_copy_phi(h.model, phi.as_mut_ptr(), phi.len()), TmStatus::Ok);
        for row in phi.chunks(m) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mut theta = vec![0.0; n * k];
        assert_eq!(tm_model_copy_theta(h.model, theta.as_mut_ptr(), theta.len()), TmStatus::Ok);
        for row in theta.chunks(k) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mut short = vec![0.0; k * m - 1];
        assert_eq!(tm_model_copy_phi(h.model, short.as_mut_ptr(), short.len()), TmStatus::BufferTooSmall);
        assert!(last_error().contains(&format!("{}", k * m)));
    }
}

#[test]
fn model_json_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 3);
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(tm_model_to_json(h.model, &mut json), TmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(tm_model_from_json(json, &mut back), TmStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(tm_model_to_json(back, &mut again), TmStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        tm_string_free(json);
        tm_string_free(again);
        tm_model_free(back);

        let mut bad = ptr::null_mut();
        assert_eq!(tm_model_from_json(c("{\"nope\": 1}").as_ptr(), &mut bad), TmStatus::Malformed);
        assert!(bad.is_null());
    }
}

#[test]
fn training_is_deterministic_through_the_c_abi() {
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = trained(a_dir.path(), 2);
    let b = trained(b_dir.path(), 2);
    unsafe {
        let mut pa = vec![0.0; 12];
        let mut pb = vec![0.0; 12];
        tm_model_copy_phi(a.model, pa.as_mut_ptr(), 12);
        tm_model_copy_phi(b.model, pb.as_mut_ptr(), 12);
        assert_eq!(pa, pb);
    }
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 2);
    unsafe {
        let mut hyper = tm_hyperparams_default(0);
        hyper.iterations = 1;
        let mut model = ptr::null_mut();
        assert_eq!(tm_train(h.prepared, hyper, &mut model), TmStatus::InvalidParameter);
        assert!(model.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn report_ranks_and_heldout_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 2);
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(tm_report_build(h.model, h.prepared, 3, 2, &mut report), TmStatus::Ok);
        assert_eq!(tm_report_num_topics(report), 2);
        let (mut t1, mut w1, mut t2, mut w2) = (0usize, 0.0, 0usize, 0.0);
        assert_eq!(tm_report_at_rank(report, 1, &mut t1, &mut w1), TmStatus::Ok);
        assert_eq!(tm_report_at_rank(report, 2, &mut t2, &mut w2), TmStatus::Ok);
        assert_ne!(t1, t2);
        assert!(w1 >= w2);
        assert!((w1 + w2 - 1.0).abs() < 1e-9);
        assert_eq!(tm_report_at_rank(report, 0, &mut t1, &mut w1), TmStatus::OutOfRange);
        assert_eq!(tm_report_at_rank(report, 3, &mut t1, &mut w1), TmStatus::OutOfRange);
        let mut json = ptr::null_mut();
        assert_eq!(tm_report_to_json(report, &mut json), TmStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["summaries"].as_array().unwrap().len(), 2);
        tm_string_free(json);
        tm_report_free(report);

        let (mut total, mut per_word) = (0.0, 0.0);
        assert_eq!(tm_model_heldout(h.model, h.prepared, 20, 10, 1, &mut total, &mut per_word), TmStatus::Ok);
        assert!(total < 0.0 && per_word < 0.0);
        assert_eq!(tm_model_heldout(h.model, h.prepared, 10, 10, 1, &mut total, &mut per_word), TmStatus::InvalidParameter);
    }
}

#[test]
fn foreign_corpus_is_a_fingerprint_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let h = trained(dir.path(), 2);
    let other_dir = tempfile::tempdir().unwrap();
    let docs = vec![Document::new("z", "apple pear plum")];
    let path = other_dir.path().join("other.jsonl");
    persist_corpus(&DocumentSet::new(docs).unwrap(), &path, CorpusFormat::Jsonl).unwrap();
    let path = c(path.to_str().unwrap());
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(tm_corpus_load(path.as_ptr(), ptr::null(), &mut corpus), TmStatus::Ok);
        let mut other = ptr::null_mut();
        assert_eq!(tm_prepare(corpus, 2, &mut other), TmStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(tm_report_build(h.model, other, 3, 2, &mut report), TmStatus::FingerprintMismatch);
        let mut encoded = ptr::null_mut();
        assert_eq!(tm_prepare_with_vocabulary(h.prepared, corpus, 2, &mut encoded), TmStatus::Other);
        tm_prepared_free(other);
        tm_corpus_free(corpus);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/topicmine.h")
}

#[test]
fn header_declares_every_exported_function() {
    let header = std::fs::read_to_string(header()).unwrap();
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 20);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for status in ["TM_STATUS_OK = 0", "TM_STATUS_PANIC = 11"] {
        assert!(header.contains(status));
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"topicmine.h\"\nint main(void) { TmHyperparams h = tm_hyperparams_default(3); return h.k == 3 ? TM_STATUS_OK : TM_STATUS_OTHER; }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(&extra)
            .args(["-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("{compiler} unavailable ({e}); header compile check skipped"),
        }
    }
}
