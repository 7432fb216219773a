//! Loading, filtering and persisting story corpora.
//!
//! Three on-disk formats are supported:
//!
//! * `csv`: RFC-4180 with header `id,text,tags[,source,posted_at]`; tags are
//!   semicolon-separated.
//! * `jsonl`: one `{"id","text","tags":[...]}` object per line.
//! * `txt-dir`: one UTF-8 `<id>.txt` file per story plus a `manifest.json`
//!   carrying order, tags and provenance.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posted_at: Option<NaiveDate>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            tags: BTreeSet::new(),
            source: None,
            posted_at: None,
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.tags = tags.into_iter().map(|t| t.as_ref().to_lowercase()).collect();
        self
    }
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSet {
    documents: Vec<Document>,
}

impl DocumentSet {
    /// Builds a set, rejecting duplicate or empty ids.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::InvalidParameter("document id must be nonempty".into()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(DocumentSet { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("document-set/v1");
        fp.u64(self.documents.len() as u64);
        for d in &self.documents {
            fp.str(&d.id).str(&d.text);
            fp.u64(d.tags.len() as u64);
            for t in &d.tags {
                fp.str(t);
            }
            fp.str(d.source.as_deref().unwrap_or(""));
            fp.str(&d.posted_at.map(|p| p.to_string()).unwrap_or_default());
        }
        fp.finish()
    }
}

impl<'a> IntoIterator for &'a DocumentSet {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
    TxtDir,
}

impl CorpusFormat {
    /// Guesses the format from a path: directories are `txt-dir`, `.jsonl`
    /// and `.json` files are `jsonl`, anything else is `csv`.
    pub fn infer(path: &Path) -> CorpusFormat {
        if path.is_dir() {
            return CorpusFormat::TxtDir;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Csv,
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Csv => "csv",
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::TxtDir => "txt-dir",
        })
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CorpusFormat::Csv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "txt-dir" | "txtdir" | "dir" => Ok(CorpusFormat::TxtDir),
            other => Err(Error::InvalidParameter(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Permit documents with empty text and corpora with zero documents.
    pub allow_empty: bool,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<DocumentSet> {
    load_corpus_with(path, format, LoadOptions::default())
}

pub fn load_corpus_with(path: &Path, format: CorpusFormat, opts: LoadOptions) -> Result<DocumentSet> {
    let docs = match format {
        CorpusFormat::Csv => read_csv(path)?,
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::TxtDir => read_txt_dir(path)?,
    };
    if !opts.allow_empty {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(d) = docs.iter().find(|d| d.text.trim().is_empty()) {
            return Err(Error::EmptyText(d.id.clone()));
        }
    }
    DocumentSet::new(docs)
}

/// Keeps documents carrying `tag`, in their original order.
pub fn filter_documents(ds: &DocumentSet, tag: &str) -> Result<DocumentSet> {
    if tag.is_empty() {
        return Err(Error::InvalidParameter("filter tag must be nonempty".into()));
    }
    let tag = tag.to_lowercase();
    Ok(DocumentSet {
        documents: ds
            .documents
            .iter()
            .filter(|d| d.tags.contains(&tag))
            .cloned()
            .collect(),
    })
}

pub fn persist_corpus(ds: &DocumentSet, path: &Path, format: CorpusFormat) -> Result<()> {
    match format {
        CorpusFormat::Csv => write_csv(ds, path),
        CorpusFormat::Jsonl => write_jsonl(ds, path),
        CorpusFormat::TxtDir => write_txt_dir(ds, path),
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    text: String,
    #[serde(default)]
    tags: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    posted_at: Option<String>,
}

fn parse_date(raw: Option<String>, path: &Path, line: u64) -> Result<Option<NaiveDate>> {
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => NaiveDate::from_str(s).map(Some).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("posted_at {s:?}: {e}"),
        }),
    }
}

fn split_tags(raw: &str) -> BTreeSet<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn read_csv(path: &Path) -> Result<Vec<Document>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let malformed = |line: u64, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut docs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: CsvRow = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(line, e.to_string()))?;
        docs.push(Document {
            posted_at: parse_date(row.posted_at, path, line)?,
            id: row.id,
            text: row.text,
            tags: row.tags.as_deref().map(split_tags).unwrap_or_default(),
            source: row.source.filter(|s| !s.is_empty()),
        });
    }
    Ok(docs)
}

fn write_csv(ds: &DocumentSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(BufWriter::new(file));
    writer.write_record(["id", "text", "tags", "source", "posted_at"])?;
    for d in ds {
        if d.tags.iter().any(|t| t.contains(';')) {
            return Err(Error::InvalidParameter(format!(
                "document {:?}: tags containing ';' cannot be written as CSV",
                d.id
            )));
        }
        let tags = d.tags.iter().map(String::as_str).collect::<Vec<_>>().join(";");
        let posted = d.posted_at.map(|p| p.to_string()).unwrap_or_default();
        writer.write_record([
            d.id.as_str(),
            d.text.as_str(),
            tags.as_str(),
            d.source.as_deref().unwrap_or(""),
            posted.as_str(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_jsonl(path: &Path) -> Result<Vec<Document>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: Document = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: idx as u64 + 1,
            message: e.to_string(),
        })?;
        doc.tags = doc.tags.iter().map(|t| t.to_lowercase()).collect();
        docs.push(doc);
    }
    Ok(docs)
}

fn write_jsonl(ds: &DocumentSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in ds {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct DirManifest {
    documents: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    #[serde(default)]
    tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    posted_at: Option<NaiveDate>,
}

fn read_txt_dir(dir: &Path) -> Result<Vec<Document>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest: DirManifest = if manifest_path.exists() {
        let raw = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Malformed {
            path: manifest_path.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?
    } else {
        DirManifest::default()
    };

    let mut docs = Vec::with_capacity(manifest.documents.len());
    let mut listed = HashSet::new();
    for entry in manifest.documents {
        let file = dir.join(format!("{}.txt", entry.id));
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        listed.insert(entry.id.clone());
        docs.push(Document {
            id: entry.id,
            text,
            tags: entry.tags.iter().map(|t| t.to_lowercase()).collect(),
            source: entry.source,
            posted_at: entry.posted_at,
        });
    }

    // Stories without a manifest entry follow in filename order, untagged.
    let mut extra: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("txt"))
        .collect();
    extra.sort();
    for file in extra {
        let Some(id) = file.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if listed.contains(id) {
            continue;
        }
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        docs.push(Document::new(id, text));
    }
    Ok(docs)
}

fn write_txt_dir(ds: &DocumentSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = DirManifest::default();
    for d in ds {
        if d.id.contains(['/', '\\']) || d.id.starts_with('.') {
            return Err(Error::InvalidParameter(format!(
                "document id {:?} is not a valid file name",
                d.id
            )));
        }
        let file = dir.join(format!("{}.txt", d.id));
        fs::write(&file, d.text.as_bytes()).map_err(|e| Error::io(&file, e))?;
        manifest.documents.push(ManifestEntry {
            id: d.id.clone(),
            tags: d.tags.clone(),
            source: d.source.clone(),
            posted_at: d.posted_at,
        });
    }
    let path = dir.join(MANIFEST_NAME);
    let raw = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, raw).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(id: &str, tags: &[&str]) -> Document {
        Document::new(id, format!("story {id}")).with_tags(tags)
    }

    #[test]
    fn single_row_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, r#"{"id":"a","text":"x","tags":["workplace"]}"#).unwrap();
        let ds = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.documents()[0].tags.contains("workplace"));
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "id,text,tags\na,one,\na,two,\n").unwrap();
        match load_corpus(&path, CorpusFormat::Csv) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn malformed_jsonl_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\n").unwrap();
        match load_corpus(&path, CorpusFormat::Jsonl) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "id,text,tags\na,fine,\nb\n").unwrap();
        match load_corpus(&path, CorpusFormat::Csv) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_rejected_unless_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "id,text,tags\na,,\n").unwrap();
        assert!(matches!(load_corpus(&path, CorpusFormat::Csv), Err(Error::EmptyText(_))));
        let ds = load_corpus_with(&path, CorpusFormat::Csv, LoadOptions { allow_empty: true }).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn empty_corpus_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "id,text,tags\n").unwrap();
        assert!(matches!(load_corpus(&path, CorpusFormat::Csv), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn unreadable_file() {
        let err = load_corpus(Path::new("/nonexistent/corpus.csv"), CorpusFormat::Csv).unwrap_err();
        assert_eq!(err.code(), "io");
    }

    #[test]
    fn filter_keeps_order() {
        let ds = DocumentSet::new(vec![
            tagged("a", &["workplace"]),
            tagged("b", &["school"]),
            tagged("c", &["workplace"]),
        ])
        .unwrap();
        let f = filter_documents(&ds, "workplace").unwrap();
        assert_eq!(f.ids(), vec!["a", "c"]);
        assert!(filter_documents(&ds, "street").unwrap().is_empty());
        assert!(filter_documents(&ds, "").is_err());
    }

    #[test]
    fn filter_matches_linear_scan() {
        let tags: [&[&str]; 10] = [
            &["workplace"],
            &["school", "workplace"],
            &["public"],
            &["workplace", "media"],
            &[],
            &["workplace"],
            &["school"],
            &["Workplace"],
            &["public", "school"],
            &["workplace"],
        ];
        let docs: Vec<_> = tags
            .iter()
            .enumerate()
            .map(|(i, t)| tagged(&format!("d{i}"), t))
            .collect();
        let ds = DocumentSet::new(docs).unwrap();
        let f = filter_documents(&ds, "workplace").unwrap();
        assert_eq!(f.len(), 6);
        assert_eq!(f.ids(), vec!["d0", "d1", "d3", "d5", "d7", "d9"]);
        assert_eq!(filter_documents(&f, "workplace").unwrap(), f);
    }

    #[test]
    fn round_trip_all_formats() {
        let mut tricky = Document::new("s2", "Line one,\n\"quoted\" line two; ünïcode\r\n");
        tricky.tags = ["workplace".to_string(), "public".to_string()].into();
        tricky.source = Some("https://example.org/s2".into());
        tricky.posted_at = Some(NaiveDate::from_ymd_opt(2016, 3, 8).unwrap());
        let ds = DocumentSet::new(vec![tagged("s1", &["workplace"]), tricky, Document::new("s3", "plain")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (fmt, name) in [
            (CorpusFormat::Csv, "c.csv"),
            (CorpusFormat::Jsonl, "c.jsonl"),
            (CorpusFormat::TxtDir, "dir"),
        ] {
            let path = dir.path().join(name);
            persist_corpus(&ds, &path, fmt).unwrap();
            let back = load_corpus(&path, fmt).unwrap();
            assert_eq!(back, ds, "format {fmt}");
        }
    }

    #[test]
    fn empty_set_round_trips_as_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        persist_corpus(&DocumentSet::default(), &path, CorpusFormat::Csv).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "id,text,tags,source,posted_at\n");
        let back = load_corpus_with(&path, CorpusFormat::Csv, LoadOptions { allow_empty: true }).unwrap();
        assert_eq!(back.len(), 0);
    }

    #[test]
    fn txt_dir_without_manifest_uses_filename_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "second").unwrap();
        fs::write(dir.path().join("a.txt"), "first").unwrap();
        let ds = load_corpus(dir.path(), CorpusFormat::TxtDir).unwrap();
        assert_eq!(ds.ids(), vec!["a", "b"]);
    }

    #[test]
    fn format_inference() {
        assert_eq!(CorpusFormat::infer(Path::new("x.jsonl")), CorpusFormat::Jsonl);
        assert_eq!(CorpusFormat::infer(Path::new("x.csv")), CorpusFormat::Csv);
        assert_eq!("txt-dir".parse::<CorpusFormat>().unwrap(), CorpusFormat::TxtDir);
    }
}
