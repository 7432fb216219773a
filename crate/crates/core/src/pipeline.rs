//! File-based pipeline stages.
//!
//! Each stage reads its prerequisites from the output directory, writes its
//! artifacts next to them, and records a `<stage>.manifest.json` with input
//! and output fingerprints. Artifacts themselves contain no timestamps, so
//! identical inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::codebook::{export_theme_report, CodeBook};
use crate::corpus_io::{self, CorpusFormat, DocumentSet, LoadOptions};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::lda::{self, Hyperparams, TopicModel};
use crate::model_select::{self, FoldIn, SplitSpec, SweepResult};
use crate::report::{self, TopicReport};
use crate::textprep::{self, EncodedCorpus, PrepRules, Vocabulary};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const PREP_FILE: &str = "prep.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const ENCODED_FILE: &str = "encoded.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE1_MD: &str = "table1.md";
pub const TABLE1_CSV: &str = "table1.csv";
pub const STORIES_MD: &str = "stories.md";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const SWEEP_JSON: &str = "sweep.json";
pub const CODEBOOK_FILE: &str = "codebook.json";
pub const THEMES_MD: &str = "themes.md";
pub const THEMES_CSV: &str = "themes.csv";
pub const THEMES_JSON: &str = "themes.json";

/// A failure annotated with the stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    /// `{"stage","code","message"}` for machine consumption.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stage": self.stage,
            "code": self.source.code(),
            "message": self.source.to_string(),
        })
    }
}

trait InStage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub tag: Option<String>,
    pub allow_empty: bool,
    pub stoplist: Option<PathBuf>,
    pub min_token_len: usize,
    pub hyper: Hyperparams,
    /// Explicit topic count; when absent, `pipeline` uses the sweep's choice.
    pub k: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub split: SplitSpec,
    pub foldin: FoldIn,
    pub top_words: usize,
    pub top_docs: usize,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            format: None,
            tag: None,
            allow_empty: false,
            stoplist: None,
            min_token_len: 2,
            hyper: Hyperparams::default(),
            k: None,
            grid: None,
            split: SplitSpec::default(),
            foldin: FoldIn::default(),
            top_words: report::DEFAULT_TOP_WORDS,
            top_docs: report::DEFAULT_TOP_DOCS,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        Hyperparams {
            k: self.k.unwrap_or(self.hyper.k),
            ..self.hyper
        }
        .validate()?;
        if self.min_token_len == 0 {
            return Err(Error::InvalidParameter("--min-token-len must be at least 1".into()));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::InvalidParameter("--train-fraction must be in (0, 1)".into()));
        }
        if self.top_words == 0 || self.top_docs == 0 {
            return Err(Error::InvalidParameter("top word and document counts must be at least 1".into()));
        }
        if let Some(tag) = &self.tag {
            if tag.is_empty() {
                return Err(Error::InvalidParameter("--tag must be nonempty".into()));
            }
        }
        Ok(())
    }

    pub fn rules(&self) -> Result<PrepRules> {
        let mut rules = PrepRules {
            min_token_len: self.min_token_len,
            ..PrepRules::default()
        };
        if let Some(path) = &self.stoplist {
            rules.stoplist = textprep::read_stoplist(path)?;
        }
        rules.validate()?;
        Ok(rules)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact(p))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub created_at: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fp = Fingerprinter::new("file/v1");
    fp.bytes(&bytes);
    Ok(fp.finish())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_manifest(cfg: &PipelineConfig, stage: &str, inputs: BTreeMap<String, String>, outputs: &[&str]) -> Result<()> {
    let outputs = outputs
        .iter()
        .map(|name| Ok((name.to_string(), file_fingerprint(&cfg.path(name))?)))
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        stage: stage.to_string(),
        created_at: Utc::now().to_rfc3339(),
        inputs,
        outputs,
    };
    write_file(
        &cfg.path(&format!("{stage}.manifest.json")),
        serde_json::to_string_pretty(&manifest)?,
    )
}

fn ensure_out(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

/// Metadata tying the vocabulary and encoded corpus to their rules and source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepInfo {
    pub format_version: u32,
    pub rules: PrepRules,
    pub rules_fingerprint: String,
    pub vocab_fingerprint: String,
    pub source_fingerprint: String,
    pub encoded_fingerprint: String,
    pub vocab_size: usize,
    pub total_tokens: usize,
}

pub fn ingest(cfg: &PipelineConfig) -> StageResult<DocumentSet> {
    const STAGE: &str = "ingest";
    (|| {
        cfg.validate()?;
        let src = cfg
            .corpus
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("--corpus is required".into()))?;
        let format = cfg.format.unwrap_or_else(|| CorpusFormat::infer(src));
        let opts = LoadOptions {
            allow_empty: cfg.allow_empty,
        };
        let mut ds = corpus_io::load_corpus_with(src, format, opts)?;
        if let Some(tag) = &cfg.tag {
            ds = corpus_io::filter_documents(&ds, tag)?;
            if ds.is_empty() && !cfg.allow_empty {
                return Err(Error::EmptyCorpus);
            }
        }
        log::info!("ingested {} documents", ds.len());
        ensure_out(cfg)?;
        corpus_io::persist_corpus(&ds, &cfg.path(CORPUS_FILE), CorpusFormat::Jsonl)?;
        let inputs = BTreeMap::from([
            ("source".to_string(), src.display().to_string()),
            ("source_format".to_string(), format.to_string()),
            ("tag".to_string(), cfg.tag.clone().unwrap_or_default()),
            ("corpus_fingerprint".to_string(), ds.fingerprint()),
        ]);
        write_manifest(cfg, STAGE, inputs, &[CORPUS_FILE])?;
        Ok(ds)
    })()
    .stage(STAGE)
}

pub fn load_ingested(cfg: &PipelineConfig) -> Result<DocumentSet> {
    let path = cfg.require(CORPUS_FILE)?;
    corpus_io::load_corpus_with(&path, CorpusFormat::Jsonl, LoadOptions { allow_empty: true })
}

pub fn prep(cfg: &PipelineConfig) -> StageResult<(Vocabulary, EncodedCorpus)> {
    const STAGE: &str = "prep";
    (|| {
        cfg.validate()?;
        let ds = load_ingested(cfg)?;
        let rules = cfg.rules()?;
        let vocab = textprep::build_vocabulary(&ds, &rules)?;
        let encoded = textprep::encode_corpus(&ds, &vocab, &rules)?;
        let info = PrepInfo {
            format_version: 1,
            rules_fingerprint: rules.fingerprint(),
            rules,
            vocab_fingerprint: vocab.fingerprint(),
            source_fingerprint: ds.fingerprint(),
            encoded_fingerprint: encoded.fingerprint(),
            vocab_size: vocab.len(),
            total_tokens: encoded.total_tokens,
        };
        log::info!("vocabulary of {} words, {} tokens", info.vocab_size, info.total_tokens);
        write_file(&cfg.path(PREP_FILE), serde_json::to_string_pretty(&info)?)?;
        write_file(&cfg.path(VOCAB_FILE), vocab.to_json()?)?;
        write_file(&cfg.path(ENCODED_FILE), serde_json::to_string(&encoded)?)?;
        let inputs = BTreeMap::from([("corpus_fingerprint".to_string(), info.source_fingerprint.clone())]);
        write_manifest(cfg, STAGE, inputs, &[PREP_FILE, VOCAB_FILE, ENCODED_FILE])?;
        Ok((vocab, encoded))
    })()
    .stage(STAGE)
}

/// Loads and cross-checks the prep artifacts.
pub fn load_prepared(cfg: &PipelineConfig) -> Result<(PrepInfo, Vocabulary, EncodedCorpus)> {
    let info: PrepInfo = serde_json::from_str(&read_file(&cfg.require(PREP_FILE)?)?)?;
    let words: Vec<String> = serde_json::from_str(&read_file(&cfg.require(VOCAB_FILE)?)?)?;
    let vocab = Vocabulary::from_words(words, info.rules_fingerprint.clone());
    if vocab.fingerprint() != info.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "vocabulary",
            expected: info.vocab_fingerprint,
            found: vocab.fingerprint(),
        });
    }
    let encoded: EncodedCorpus = serde_json::from_str(&read_file(&cfg.require(ENCODED_FILE)?)?)?;
    let encoded = EncodedCorpus::new(encoded.docs, encoded.doc_ids, encoded.vocab_size, encoded.vocab_fingerprint)?;
    if encoded.vocab_fingerprint != info.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "encoded corpus vocabulary",
            expected: info.vocab_fingerprint,
            found: encoded.vocab_fingerprint,
        });
    }
    Ok((info, vocab, encoded))
}

pub fn train(cfg: &PipelineConfig) -> StageResult<TopicModel> {
    const STAGE: &str = "train";
    (|| {
        cfg.validate()?;
        let (info, _vocab, encoded) = load_prepared(cfg)?;
        let h = Hyperparams {
            k: cfg.k.unwrap_or(cfg.hyper.k),
            ..cfg.hyper
        };
        log::info!("training k = {} for {} sweeps", h.k, h.iterations);
        let model = lda::train(&encoded, &h)?;
        write_file(&cfg.path(MODEL_FILE), model.to_json()?)?;
        let inputs = BTreeMap::from([
            ("vocab_fingerprint".to_string(), info.vocab_fingerprint),
            ("encoded_fingerprint".to_string(), info.encoded_fingerprint),
            ("model_fingerprint".to_string(), model.fingerprint()),
        ]);
        write_manifest(cfg, STAGE, inputs, &[MODEL_FILE])?;
        Ok(model)
    })()
    .stage(STAGE)
}

pub fn sweep(cfg: &PipelineConfig) -> StageResult<SweepResult> {
    const STAGE: &str = "sweep";
    (|| {
        cfg.validate()?;
        let (info, _vocab, encoded) = load_prepared(cfg)?;
        let grid = cfg.grid.clone().unwrap_or_else(|| model_select::DEFAULT_GRID.to_vec());
        let result = match model_select::sweep_topic_counts(&encoded, &grid, &cfg.split, &cfg.hyper, &cfg.foldin) {
            Ok(r) => r,
            Err(abort) => {
                let partial = SweepResult {
                    grid: abort.completed.iter().map(|p| p.k).collect(),
                    chosen_k: 0,
                    points: abort.completed,
                };
                write_file(&cfg.path("sweep.partial.json"), serde_json::to_string_pretty(&partial)?)?;
                return Err(Error::InvalidParameter(format!(
                    "grid point k = {} failed ({}); partial results in sweep.partial.json",
                    abort.failed_k, abort.error
                )));
            }
        };
        log::info!("chosen k = {}", result.chosen_k);
        write_file(&cfg.path(SWEEP_CSV), result.to_csv())?;
        write_file(&cfg.path(SWEEP_SVG), result.to_svg())?;
        write_file(&cfg.path(SWEEP_JSON), serde_json::to_string_pretty(&result)?)?;
        let inputs = BTreeMap::from([
            ("encoded_fingerprint".to_string(), info.encoded_fingerprint),
            ("chosen_k".to_string(), result.chosen_k.to_string()),
        ]);
        write_manifest(cfg, STAGE, inputs, &[SWEEP_CSV, SWEEP_SVG, SWEEP_JSON])?;
        Ok(result)
    })()
    .stage(STAGE)
}

pub fn load_model(cfg: &PipelineConfig) -> Result<TopicModel> {
    TopicModel::from_json(&read_file(&cfg.require(MODEL_FILE)?)?)
}

pub fn load_report(cfg: &PipelineConfig) -> Result<TopicReport> {
    Ok(serde_json::from_str(&read_file(&cfg.require(REPORT_FILE)?)?)?)
}

pub fn load_codebook(cfg: &PipelineConfig) -> Result<CodeBook> {
    CodeBook::load(&cfg.require(CODEBOOK_FILE)?)
}

pub fn report(cfg: &PipelineConfig) -> StageResult<TopicReport> {
    const STAGE: &str = "report";
    (|| {
        cfg.validate()?;
        let (info, vocab, encoded) = load_prepared(cfg)?;
        let model = load_model(cfg)?;
        let ds = load_ingested(cfg)?;
        if ds.fingerprint() != info.source_fingerprint {
            return Err(Error::FingerprintMismatch {
                what: "ingested corpus",
                expected: info.source_fingerprint,
                found: ds.fingerprint(),
            });
        }
        let rep = report::build_report(&model, &vocab, &encoded, cfg.top_words, cfg.top_docs)?;
        let codebook = match CodeBook::load(&cfg.path(CODEBOOK_FILE)) {
            Ok(cb) if cb.model_fingerprint == rep.model_fingerprint => Some(cb),
            _ => None,
        };
        let labels = |t: usize| codebook.as_ref().and_then(|cb| cb.consensus_label(t).map(str::to_string));
        let text = |id: &str| ds.get(id).map(|d| d.text.clone());
        write_file(&cfg.path(REPORT_FILE), serde_json::to_string_pretty(&rep)?)?;
        write_file(&cfg.path(TABLE1_MD), rep.to_markdown(&labels))?;
        write_file(&cfg.path(TABLE1_CSV), rep.to_csv(&labels)?)?;
        write_file(&cfg.path(STORIES_MD), rep.stories_markdown(&text))?;
        let inputs = BTreeMap::from([
            ("model_fingerprint".to_string(), rep.model_fingerprint.clone()),
            ("vocab_fingerprint".to_string(), rep.vocab_fingerprint.clone()),
            ("corpus_fingerprint".to_string(), rep.corpus_fingerprint.clone()),
        ]);
        write_manifest(cfg, STAGE, inputs, &[REPORT_FILE, TABLE1_MD, TABLE1_CSV, STORIES_MD])?;
        Ok(rep)
    })()
    .stage(STAGE)
}

/// Creates `codebook.json` for the current report with the given coders.
pub fn codebook_init(cfg: &PipelineConfig, coders: &[String], force: bool) -> StageResult<CodeBook> {
    const STAGE: &str = "codebook-init";
    (|| {
        let rep = load_report(cfg)?;
        let path = cfg.path(CODEBOOK_FILE);
        if path.exists() && !force {
            return Err(Error::Codebook(format!("{} already exists (use --force)", path.display())));
        }
        let mut cb = CodeBook::for_report(&rep);
        for c in coders {
            cb.register_coder(c)?;
        }
        cb.save(&path)?;
        Ok(cb)
    })()
    .stage(STAGE)
}

pub fn codebook_export(cfg: &PipelineConfig) -> StageResult<crate::codebook::ThemeReport> {
    const STAGE: &str = "codebook-export";
    (|| {
        let rep = load_report(cfg)?;
        let cb = load_codebook(cfg)?;
        let themes = export_theme_report(&cb, &rep)?;
        write_file(&cfg.path(THEMES_MD), themes.to_markdown())?;
        write_file(&cfg.path(THEMES_CSV), themes.to_csv()?)?;
        write_file(&cfg.path(THEMES_JSON), themes.to_json()?)?;
        let inputs = BTreeMap::from([("model_fingerprint".to_string(), rep.model_fingerprint.clone())]);
        write_manifest(cfg, STAGE, inputs, &[THEMES_MD, THEMES_CSV, THEMES_JSON])?;
        Ok(themes)
    })()
    .stage(STAGE)
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub documents: usize,
    pub sweep: Option<SweepResult>,
    pub model: TopicModel,
    pub report: TopicReport,
}

/// Runs ingest, prep, the optional sweep, train and report in order. Without
/// an explicit `k` the sweep's chosen value is used.
pub fn run_pipeline(cfg: &PipelineConfig) -> StageResult<PipelineOutcome> {
    cfg.validate().stage("pipeline")?;
    let ds = ingest(cfg)?;
    prep(cfg)?;
    let sweep_result = match (&cfg.grid, cfg.k) {
        (Some(_), _) | (None, None) => Some(sweep(cfg)?),
        (None, Some(_)) => None,
    };
    let k = cfg
        .k
        .or(sweep_result.as_ref().map(|s| s.chosen_k))
        .expect("k or sweep present");
    let train_cfg = PipelineConfig {
        k: Some(k),
        ..cfg.clone()
    };
    let model = train(&train_cfg)?;
    let rep = report(&train_cfg)?;
    Ok(PipelineOutcome {
        documents: ds.len(),
        sweep: sweep_result,
        model,
        report: rep,
    })
}
