//! The qualitative coding phase: per-coder topic labels, retention
//! decisions, consensus labels and theme grouping.
//!
//! Every change goes through [`CodeBook::apply`] as a [`Mutation`] and is
//! appended to the audit log, so replaying the log onto an empty codebook
//! reproduces the current state exactly. Mutations are validated before
//! anything is written; a rejected mutation leaves the codebook untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::TopicReport;

pub const CODEBOOK_FORMAT_VERSION: u32 = 1;
pub const THEME_REPORT_FORMAT_VERSION: u32 = 1;

/// Top-level themes. The built-in set follows the sex discrimination and
/// sexual harassment typology; anything else is `Custom`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Theme {
    SexDiscrimination,
    SexDiscriminationAndGenderHarassment,
    UnwantedSexualAttention,
    SexualCoercion,
    Custom(String),
}

impl Theme {
    pub const DEFAULTS: [Theme; 4] = [
        Theme::SexDiscrimination,
        Theme::SexDiscriminationAndGenderHarassment,
        Theme::UnwantedSexualAttention,
        Theme::SexualCoercion,
    ];

    pub fn key(&self) -> &str {
        match self {
            Theme::SexDiscrimination => "sex_discrimination",
            Theme::SexDiscriminationAndGenderHarassment => "sex_discrimination_and_gender_harassment",
            Theme::UnwantedSexualAttention => "unwanted_sexual_attention",
            Theme::SexualCoercion => "sexual_coercion",
            Theme::Custom(s) => s,
        }
    }

    pub fn title(&self) -> &str {
        match self {
            Theme::SexDiscrimination => "Sex Discrimination",
            Theme::SexDiscriminationAndGenderHarassment => "Sex Discrimination & Gender Harassment",
            Theme::UnwantedSexualAttention => "Unwanted Sexual Attention",
            Theme::SexualCoercion => "Sexual Coercion",
            Theme::Custom(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Subtheme {
    SexistHostility,
    SexualHostility,
    GenderPolicing,
    WorkFamilyPolicing,
    Reporting,
    Custom(String),
}

impl Subtheme {
    pub const DEFAULTS: [Subtheme; 5] = [
        Subtheme::SexistHostility,
        Subtheme::SexualHostility,
        Subtheme::GenderPolicing,
        Subtheme::WorkFamilyPolicing,
        Subtheme::Reporting,
    ];

    pub fn key(&self) -> &str {
        match self {
            Subtheme::SexistHostility => "sexist_hostility",
            Subtheme::SexualHostility => "sexual_hostility",
            Subtheme::GenderPolicing => "gender_policing",
            Subtheme::WorkFamilyPolicing => "work_family_policing",
            Subtheme::Reporting => "reporting",
            Subtheme::Custom(s) => s,
        }
    }

    pub fn title(&self) -> &str {
        match self {
            Subtheme::SexistHostility => "Sexist Hostility",
            Subtheme::SexualHostility => "Sexual Hostility",
            Subtheme::GenderPolicing => "Gender Policing",
            Subtheme::WorkFamilyPolicing => "Work/Family Policing",
            Subtheme::Reporting => "Reporting",
            Subtheme::Custom(s) => s,
        }
    }
}

macro_rules! string_enum {
    ($ty:ident) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                if s.is_empty() {
                    return Err(Error::Codebook(concat!(stringify!($ty), " must be nonempty").into()));
                }
                Ok($ty::DEFAULTS
                    .iter()
                    .find(|d| d.key() == s)
                    .cloned()
                    .unwrap_or_else(|| $ty::Custom(s.to_string())))
            }
        }

        impl TryFrom<String> for $ty {
            type Error = Error;

            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }

        impl From<$ty> for String {
            fn from(v: $ty) -> String {
                v.key().to_string()
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.key())
            }
        }
    };
}

string_enum!(Theme);
string_enum!(Subtheme);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicStatus {
    Retained,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeleteReason {
    Incoherent,
    OffScope,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoderLabel {
    pub topic_index: usize,
    pub coder_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicDecision {
    pub topic_index: usize,
    pub status: TopicStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DeleteReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeAssignment {
    pub topic_index: usize,
    pub theme: Theme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtheme: Option<Subtheme>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    RegisterCoder {
        coder: String,
    },
    Label {
        topic: usize,
        coder: String,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        notes: Option<String>,
    },
    Status {
        topic: usize,
        status: TopicStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<DeleteReason>,
    },
    Consensus {
        topic: usize,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        description: Option<String>,
    },
    Theme {
        topic: usize,
        theme: Theme,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subtheme: Option<Subtheme>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub mutation: Mutation,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBook {
    pub format_version: u32,
    pub model_fingerprint: String,
    pub num_topics: usize,
    pub coders: BTreeSet<String>,
    /// Current label per topic and coder.
    pub labels: BTreeMap<usize, BTreeMap<String, CoderLabel>>,
    /// One decision per topic, indexed by topic.
    pub decisions: Vec<TopicDecision>,
    pub themes: BTreeMap<usize, ThemeAssignment>,
    pub audit: Vec<AuditEntry>,
}

impl CodeBook {
    /// An empty codebook for a `num_topics` model; every topic starts retained.
    pub fn new(model_fingerprint: impl Into<String>, num_topics: usize) -> Self {
        CodeBook {
            format_version: CODEBOOK_FORMAT_VERSION,
            model_fingerprint: model_fingerprint.into(),
            num_topics,
            coders: BTreeSet::new(),
            labels: BTreeMap::new(),
            decisions: (0..num_topics)
                .map(|t| TopicDecision {
                    topic_index: t,
                    status: TopicStatus::Retained,
                    reason: None,
                    consensus_label: None,
                    description: None,
                })
                .collect(),
            themes: BTreeMap::new(),
            audit: Vec::new(),
        }
    }

    pub fn for_report(report: &TopicReport) -> Self {
        CodeBook::new(report.model_fingerprint.clone(), report.num_topics())
    }

    fn check_topic(&self, topic: usize) -> Result<()> {
        if topic >= self.num_topics {
            return Err(Error::UnknownTopic {
                topic,
                k: self.num_topics,
            });
        }
        Ok(())
    }

    fn require_retained(&self, topic: usize, what: &str) -> Result<()> {
        if self.decisions[topic].status == TopicStatus::Deleted {
            return Err(Error::Codebook(format!("cannot record {what} on deleted topic {topic}")));
        }
        Ok(())
    }

    /// Validates `m` against the current state and returns the audit flags
    /// it would carry.
    fn validate(&self, m: &Mutation) -> Result<Vec<String>> {
        let nonempty = |s: &str, what: &str| {
            if s.trim().is_empty() {
                Err(Error::Codebook(format!("{what} must be nonempty")))
            } else {
                Ok(())
            }
        };
        let mut flags = Vec::new();
        match m {
            Mutation::RegisterCoder { coder } => nonempty(coder, "coder id")?,
            Mutation::Label { topic, coder, label, .. } => {
                self.check_topic(*topic)?;
                if !self.coders.contains(coder) {
                    return Err(Error::UnknownCoder(coder.clone()));
                }
                nonempty(label, "label")?;
            }
            Mutation::Status { topic, status, reason } => {
                self.check_topic(*topic)?;
                if *status == TopicStatus::Deleted && reason.is_none() {
                    return Err(Error::Codebook(format!("deleting topic {topic} requires a reason")));
                }
            }
            Mutation::Consensus { topic, label, .. } => {
                self.check_topic(*topic)?;
                self.require_retained(*topic, "consensus")?;
                nonempty(label, "consensus label")?;
                if self.labels.get(topic).is_none_or(BTreeMap::is_empty) {
                    flags.push("no-individual-labels".to_string());
                }
            }
            Mutation::Theme { topic, .. } => {
                self.check_topic(*topic)?;
                self.require_retained(*topic, "a theme")?;
                if self.decisions[*topic].consensus_label.is_none() {
                    return Err(Error::Codebook(format!(
                        "topic {topic} needs a consensus label before theme assignment"
                    )));
                }
            }
        }
        Ok(flags)
    }

    /// Validates and applies a mutation, appending it to the audit log.
    pub fn apply(&mut self, mutation: Mutation, at: DateTime<Utc>) -> Result<&AuditEntry> {
        let flags = self.validate(&mutation)?;
        self.write(&mutation, at);
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64,
            at,
            mutation,
            flags,
        });
        Ok(self.audit.last().expect("just pushed"))
    }

    fn write(&mut self, m: &Mutation, at: DateTime<Utc>) {
        match m.clone() {
            Mutation::RegisterCoder { coder } => {
                self.coders.insert(coder);
            }
            Mutation::Label {
                topic,
                coder,
                label,
                notes,
            } => {
                self.labels.entry(topic).or_default().insert(
                    coder.clone(),
                    CoderLabel {
                        topic_index: topic,
                        coder_id: coder,
                        label,
                        notes,
                        timestamp: at,
                    },
                );
            }
            Mutation::Status { topic, status, reason } => {
                let d = &mut self.decisions[topic];
                d.status = status;
                match status {
                    TopicStatus::Deleted => {
                        d.reason = reason;
                        self.themes.remove(&topic);
                    }
                    TopicStatus::Retained => d.reason = None,
                }
            }
            Mutation::Consensus {
                topic,
                label,
                description,
            } => {
                let d = &mut self.decisions[topic];
                d.consensus_label = Some(label);
                d.description = description;
            }
            Mutation::Theme { topic, theme, subtheme } => {
                self.themes.insert(
                    topic,
                    ThemeAssignment {
                        topic_index: topic,
                        theme,
                        subtheme,
                    },
                );
            }
        }
    }

    pub fn register_coder(&mut self, coder: &str) -> Result<()> {
        if self.coders.contains(coder) {
            return Ok(());
        }
        self.apply(Mutation::RegisterCoder { coder: coder.into() }, Utc::now())?;
        Ok(())
    }

    pub fn record_coder_label(&mut self, topic: usize, coder: &str, label: &str, notes: Option<&str>) -> Result<()> {
        let m = Mutation::Label {
            topic,
            coder: coder.into(),
            label: label.into(),
            notes: notes.map(Into::into),
        };
        self.apply(m, Utc::now()).map(drop)
    }

    pub fn set_topic_status(&mut self, topic: usize, status: TopicStatus, reason: Option<DeleteReason>) -> Result<()> {
        self.apply(Mutation::Status { topic, status, reason }, Utc::now()).map(drop)
    }

    pub fn record_consensus_label(&mut self, topic: usize, label: &str, description: Option<&str>) -> Result<()> {
        let m = Mutation::Consensus {
            topic,
            label: label.into(),
            description: description.map(Into::into),
        };
        self.apply(m, Utc::now()).map(drop)
    }

    pub fn assign_theme(&mut self, topic: usize, theme: Theme, subtheme: Option<Subtheme>) -> Result<()> {
        self.apply(Mutation::Theme { topic, theme, subtheme }, Utc::now()).map(drop)
    }

    /// All current coder labels for `topic`, ordered by coder id.
    pub fn coder_labels(&self, topic: usize) -> Vec<&CoderLabel> {
        self.labels.get(&topic).map(|m| m.values().collect()).unwrap_or_default()
    }

    pub fn status(&self, topic: usize) -> Option<TopicStatus> {
        self.decisions.get(topic).map(|d| d.status)
    }

    pub fn retained(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .filter(|d| d.status == TopicStatus::Retained)
            .map(|d| d.topic_index)
            .collect()
    }

    pub fn deleted(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .filter(|d| d.status == TopicStatus::Deleted)
            .map(|d| d.topic_index)
            .collect()
    }

    pub fn consensus_label(&self, topic: usize) -> Option<&str> {
        self.decisions.get(topic)?.consensus_label.as_deref()
    }

    /// Rebuilds the codebook from its audit log alone.
    pub fn replay(&self) -> Result<CodeBook> {
        let mut cb = CodeBook::new(self.model_fingerprint.clone(), self.num_topics);
        for entry in &self.audit {
            let applied = cb.apply(entry.mutation.clone(), entry.at)?;
            if applied.flags != entry.flags {
                return Err(Error::Codebook(format!("audit entry {} replayed with different flags", entry.seq)));
            }
        }
        Ok(cb)
    }

    /// Checks referential integrity against a report.
    pub fn check_against(&self, report: &TopicReport) -> Result<()> {
        if self.model_fingerprint != report.model_fingerprint {
            return Err(Error::FingerprintMismatch {
                what: "model",
                expected: report.model_fingerprint.clone(),
                found: self.model_fingerprint.clone(),
            });
        }
        if self.num_topics != report.num_topics() {
            return Err(Error::Codebook(format!(
                "codebook has {} topics, report has {}",
                self.num_topics,
                report.num_topics()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let cb: CodeBook = serde_json::from_str(raw)?;
        if cb.format_version != CODEBOOK_FORMAT_VERSION {
            return Err(Error::FormatVersion(cb.format_version));
        }
        if cb.decisions.len() != cb.num_topics {
            return Err(Error::Codebook("decision list does not cover every topic".into()));
        }
        Ok(cb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CodeBook::from_json(&raw)
    }

    /// Writes through a temporary file and rename so readers never see a
    /// partial document.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeTopic {
    pub topic_index: usize,
    pub rank: usize,
    pub label: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubthemeGroup {
    pub subtheme: Option<String>,
    pub title: Option<String>,
    pub topics: Vec<ThemeTopic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeGroup {
    pub theme: String,
    pub title: String,
    pub subthemes: Vec<SubthemeGroup>,
}

/// Theme table: theme → subtheme → topic (rank) with descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeReport {
    pub format_version: u32,
    pub model_fingerprint: String,
    pub header: String,
    pub themes: Vec<ThemeGroup>,
}

pub fn export_theme_report(cb: &CodeBook, report: &TopicReport) -> Result<ThemeReport> {
    cb.check_against(report)?;
    let retained = cb.retained();
    let unthemed: Vec<usize> = retained.iter().copied().filter(|t| !cb.themes.contains_key(t)).collect();
    if !unthemed.is_empty() {
        return Err(Error::UnthemedTopics(unthemed));
    }

    let mut grouped: BTreeMap<&Theme, BTreeMap<Option<&Subtheme>, Vec<ThemeTopic>>> = BTreeMap::new();
    for &t in &retained {
        let a = &cb.themes[&t];
        let d = &cb.decisions[t];
        grouped
            .entry(&a.theme)
            .or_default()
            .entry(a.subtheme.as_ref())
            .or_default()
            .push(ThemeTopic {
                topic_index: t,
                rank: report.rank_of(t).expect("checked topic count"),
                label: d.consensus_label.clone().unwrap_or_default(),
                description: d.description.clone().unwrap_or_default(),
            });
    }
    let themes: Vec<ThemeGroup> = grouped
        .into_iter()
        .map(|(theme, subs)| ThemeGroup {
            theme: theme.key().to_string(),
            title: theme.title().to_string(),
            subthemes: subs
                .into_iter()
                .map(|(sub, mut topics)| {
                    topics.sort_by_key(|t| (t.rank, t.topic_index));
                    SubthemeGroup {
                        subtheme: sub.map(|s| s.key().to_string()),
                        title: sub.map(|s| s.title().to_string()),
                        topics,
                    }
                })
                .collect(),
        })
        .collect();

    let header = if retained.is_empty() {
        format!("No retained topics: all {} topics were deleted.", cb.num_topics)
    } else {
        format!(
            "{} retained topics grouped into {} themes ({} deleted).",
            retained.len(),
            themes.len(),
            cb.num_topics - retained.len()
        )
    };
    Ok(ThemeReport {
        format_version: THEME_REPORT_FORMAT_VERSION,
        model_fingerprint: cb.model_fingerprint.clone(),
        header,
        themes,
    })
}

impl ThemeReport {
    pub fn topic_indices(&self) -> BTreeSet<usize> {
        self.rows_iter().map(|(_, _, t)| t.topic_index).collect()
    }

    fn rows_iter(&self) -> impl Iterator<Item = (&ThemeGroup, &SubthemeGroup, &ThemeTopic)> {
        self.themes
            .iter()
            .flat_map(|g| g.subthemes.iter().flat_map(move |s| s.topics.iter().map(move |t| (g, s, t))))
    }

    /// Flat rows `(Theme, Subtheme, Topic (Rank), Description)`; theme and
    /// subtheme cells are blank when repeated, as in a printed table.
    pub fn rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        for g in &self.themes {
            let mut theme_cell = g.title.clone();
            for s in &g.subthemes {
                let mut sub_cell = s.title.clone().unwrap_or_default();
                for t in &s.topics {
                    rows.push([
                        std::mem::take(&mut theme_cell),
                        std::mem::take(&mut sub_cell),
                        format!("{} ({})", t.label, t.rank),
                        t.description.clone(),
                    ]);
                }
            }
        }
        rows
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("{}\n\n| Theme | Subtheme | Topic (Rank) | Description |\n|---|---|---|---|\n", self.header);
        for r in self.rows() {
            let cells: Vec<String> = r.iter().map(|c| c.replace('|', "\\|").replace('\n', " ")).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["Theme", "Subtheme", "Topic (Rank)", "Description"])?;
        for r in self.rows() {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural check of a serialized theme report.
    pub fn validate_json(value: &serde_json::Value) -> Result<()> {
        use serde_json::Value;
        let fail = |msg: String| Err(Error::Codebook(format!("theme report schema: {msg}")));
        let obj = match value {
            Value::Object(o) => o,
            _ => return fail("root must be an object".into()),
        };
        if obj.get("format_version").and_then(Value::as_u64) != Some(THEME_REPORT_FORMAT_VERSION as u64) {
            return fail("format_version missing or unsupported".into());
        }
        for key in ["model_fingerprint", "header"] {
            if !obj.get(key).is_some_and(Value::is_string) {
                return fail(format!("{key} must be a string"));
            }
        }
        let Some(themes) = obj.get("themes").and_then(Value::as_array) else {
            return fail("themes must be an array".into());
        };
        for (i, g) in themes.iter().enumerate() {
            if !g.get("theme").is_some_and(Value::is_string) || !g.get("title").is_some_and(Value::is_string) {
                return fail(format!("themes[{i}] needs string theme and title"));
            }
            let Some(subs) = g.get("subthemes").and_then(Value::as_array) else {
                return fail(format!("themes[{i}].subthemes must be an array"));
            };
            for (j, s) in subs.iter().enumerate() {
                let sub_ok = |k: &str| s.get(k).is_some_and(|v| v.is_null() || v.is_string());
                if !sub_ok("subtheme") || !sub_ok("title") {
                    return fail(format!("themes[{i}].subthemes[{j}] subtheme/title must be string or null"));
                }
                let Some(topics) = s.get("topics").and_then(Value::as_array) else {
                    return fail(format!("themes[{i}].subthemes[{j}].topics must be an array"));
                };
                for t in topics {
                    let ok = t.get("topic_index").is_some_and(Value::is_u64)
                        && t.get("rank").and_then(Value::as_u64).is_some_and(|r| r >= 1)
                        && t.get("label").is_some_and(Value::is_string)
                        && t.get("description").is_some_and(Value::is_string);
                    if !ok {
                        return fail(format!("malformed topic entry in themes[{i}].subthemes[{j}]"));
                    }
                }
            }
        }
        Ok(())
    }
}
