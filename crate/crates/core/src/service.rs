//! JSON-over-HTTP facade for the coding workflow.
//!
//! The service reads the report and corpus artifacts once at startup and
//! owns the codebook. All codebook writes go through one mutex: a mutation
//! is applied to a copy, persisted, and only then published, so readers see
//! either the old or the new state. Every response carries the model
//! fingerprint in the `x-model-fingerprint` header.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;

use crate::codebook::{
    export_theme_report, CodeBook, CoderLabel, DeleteReason, Mutation, Subtheme, Theme, TopicStatus,
};
use crate::corpus_io::DocumentSet;
use crate::error::Error;
use crate::pipeline::{self, PipelineConfig, PrepInfo};
use crate::report::{DocScore, TopicReport, WordScore};

pub const FINGERPRINT_HEADER: &str = "x-model-fingerprint";

pub struct AppState {
    report: TopicReport,
    stories: HashMap<String, String>,
    codebook: RwLock<CodeBook>,
    codebook_path: Option<PathBuf>,
    token: Option<String>,
}

impl AppState {
    /// Builds state from in-memory artifacts after checking they belong together.
    pub fn new(
        report: TopicReport,
        corpus: &DocumentSet,
        codebook: CodeBook,
        codebook_path: Option<PathBuf>,
        token: Option<String>,
    ) -> Result<Self, Error> {
        codebook.check_against(&report)?;
        let stories: HashMap<String, String> = corpus.iter().map(|d| (d.id.clone(), d.text.clone())).collect();
        for s in &report.summaries {
            if let Some(missing) = s.top_docs.iter().find(|d| !stories.contains_key(&d.doc_id)) {
                return Err(Error::FingerprintMismatch {
                    what: "corpus",
                    expected: report.corpus_fingerprint.clone(),
                    found: format!("corpus without document {:?}", missing.doc_id),
                });
            }
        }
        Ok(AppState {
            report,
            stories,
            codebook: RwLock::new(codebook),
            codebook_path,
            token,
        })
    }

    /// Loads report, corpus and codebook from a pipeline output directory,
    /// creating the codebook if it does not exist yet.
    pub fn from_artifacts(cfg: &PipelineConfig, coders: &[String], token: Option<String>) -> Result<Self, Error> {
        let report = pipeline::load_report(cfg)?;
        let corpus = pipeline::load_ingested(cfg)?;
        let info: PrepInfo = serde_json::from_str(
            &std::fs::read_to_string(cfg.out.join(pipeline::PREP_FILE))
                .map_err(|e| Error::io(cfg.out.join(pipeline::PREP_FILE), e))?,
        )?;
        if info.source_fingerprint != corpus.fingerprint() {
            return Err(Error::FingerprintMismatch {
                what: "ingested corpus",
                expected: info.source_fingerprint,
                found: corpus.fingerprint(),
            });
        }
        if info.encoded_fingerprint != report.corpus_fingerprint {
            return Err(Error::FingerprintMismatch {
                what: "report corpus",
                expected: info.encoded_fingerprint,
                found: report.corpus_fingerprint.clone(),
            });
        }
        let path = cfg.out.join(pipeline::CODEBOOK_FILE);
        let mut codebook = if path.exists() {
            CodeBook::load(&path)?
        } else {
            CodeBook::for_report(&report)
        };
        for c in coders {
            codebook.register_coder(c)?;
        }
        codebook.save(&path)?;
        AppState::new(report, &corpus, codebook, Some(path), token)
    }

    pub fn report(&self) -> &TopicReport {
        &self.report
    }

    pub async fn codebook(&self) -> CodeBook {
        self.codebook.read().await.clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            details: Value::Null,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownTopic { .. } | Error::UnknownCoder(_) => StatusCode::NOT_FOUND,
            Error::Codebook(_) | Error::UnthemedTopics(_) | Error::InvalidParameter(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::FingerprintMismatch { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let details = match &e {
            Error::UnthemedTopics(topics) => json!({ "topics": topics }),
            _ => Value::Null,
        };
        ApiError {
            status,
            code: e.code().to_string(),
            message: e.to_string(),
            details,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicView {
    pub topic_index: usize,
    pub rank: usize,
    pub weight: f64,
    pub top_words: Vec<WordScore>,
    pub status: TopicStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<DeleteReason>,
    pub consensus_label: Option<String>,
    pub description: Option<String>,
    pub theme: Option<Theme>,
    pub subtheme: Option<Subtheme>,
    pub coder_labels: Vec<CoderLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_docs: Option<Vec<DocScore>>,
}

fn topic_view(report: &TopicReport, cb: &CodeBook, topic: usize, with_docs: bool) -> ApiResult<TopicView> {
    let s = report.by_topic(topic).ok_or(Error::UnknownTopic {
        topic,
        k: report.num_topics(),
    })?;
    let d = &cb.decisions[topic];
    let a = cb.themes.get(&topic);
    Ok(TopicView {
        topic_index: topic,
        rank: s.rank,
        weight: s.weight,
        top_words: s.top_words.clone(),
        status: d.status,
        reason: d.reason,
        consensus_label: d.consensus_label.clone(),
        description: d.description.clone(),
        theme: a.map(|a| a.theme.clone()),
        subtheme: a.and_then(|a| a.subtheme.clone()),
        coder_labels: cb.coder_labels(topic).into_iter().cloned().collect(),
        top_docs: with_docs.then(|| s.top_docs.clone()),
    })
}

async fn get_report(State(st): State<Arc<AppState>>) -> Json<TopicReport> {
    Json(st.report.clone())
}

async fn list_topics(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<TopicView>>> {
    let cb = st.codebook.read().await;
    let views = st
        .report
        .summaries
        .iter()
        .map(|s| topic_view(&st.report, &cb, s.topic_index, false))
        .collect::<ApiResult<_>>()?;
    Ok(Json(views))
}

async fn get_topic(State(st): State<Arc<AppState>>, Path(topic): Path<usize>) -> ApiResult<Json<TopicView>> {
    let cb = st.codebook.read().await;
    Ok(Json(topic_view(&st.report, &cb, topic, true)?))
}

#[derive(Debug, Deserialize)]
struct StoriesQuery {
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Story {
    pub doc_id: String,
    pub prob: f64,
    pub text: String,
}

async fn topic_stories(
    State(st): State<Arc<AppState>>,
    Path(topic): Path<usize>,
    Query(q): Query<StoriesQuery>,
) -> ApiResult<Json<Vec<Story>>> {
    let s = st.report.by_topic(topic).ok_or(Error::UnknownTopic {
        topic,
        k: st.report.num_topics(),
    })?;
    let limit = q.limit.unwrap_or(st.report.docs_per_topic);
    let stories = s
        .top_docs
        .iter()
        .take(limit)
        .map(|d| Story {
            doc_id: d.doc_id.clone(),
            prob: d.prob,
            text: st.stories.get(&d.doc_id).cloned().unwrap_or_default(),
        })
        .collect();
    Ok(Json(stories))
}

async fn get_codebook(State(st): State<Arc<AppState>>) -> Json<CodeBook> {
    Json(st.codebook.read().await.clone())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MutationResponse {
    pub audit_seq: u64,
    pub flags: Vec<String>,
    pub topic: TopicView,
}

/// Applies a mutation through the single writer: copy, apply, persist, publish.
async fn mutate(st: &AppState, topic: usize, mutation: Mutation) -> ApiResult<Json<MutationResponse>> {
    let mut guard = st.codebook.write().await;
    let mut next = guard.clone();
    let entry = next.apply(mutation, Utc::now())?.clone();
    if let Some(path) = &st.codebook_path {
        next.save(path)?;
    }
    *guard = next;
    Ok(Json(MutationResponse {
        audit_seq: entry.seq,
        flags: entry.flags,
        topic: topic_view(&st.report, &guard, topic, false)?,
    }))
}

#[derive(Debug, Deserialize)]
struct LabelBody {
    label: String,
    #[serde(default)]
    notes: Option<String>,
}

async fn put_label(
    State(st): State<Arc<AppState>>,
    Path((topic, coder)): Path<(usize, String)>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let b: LabelBody = parse_body(&body)?;
    let m = Mutation::Label {
        topic,
        coder,
        label: b.label,
        notes: b.notes,
    };
    mutate(&st, topic, m).await
}

#[derive(Debug, Deserialize)]
struct StatusBody {
    status: TopicStatus,
    #[serde(default)]
    reason: Option<DeleteReason>,
}

async fn put_status(
    State(st): State<Arc<AppState>>,
    Path(topic): Path<usize>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let b: StatusBody = parse_body(&body)?;
    let m = Mutation::Status {
        topic,
        status: b.status,
        reason: b.reason,
    };
    mutate(&st, topic, m).await
}

#[derive(Debug, Deserialize)]
struct ConsensusBody {
    label: String,
    #[serde(default)]
    description: Option<String>,
}

async fn put_consensus(
    State(st): State<Arc<AppState>>,
    Path(topic): Path<usize>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let b: ConsensusBody = parse_body(&body)?;
    let m = Mutation::Consensus {
        topic,
        label: b.label,
        description: b.description,
    };
    mutate(&st, topic, m).await
}

#[derive(Debug, Deserialize)]
struct ThemeBody {
    theme: Theme,
    #[serde(default)]
    subtheme: Option<Subtheme>,
}

async fn put_theme(
    State(st): State<Arc<AppState>>,
    Path(topic): Path<usize>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let b: ThemeBody = parse_body(&body)?;
    let m = Mutation::Theme {
        topic,
        theme: b.theme,
        subtheme: b.subtheme,
    };
    mutate(&st, topic, m).await
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

fn text_response(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn export_themes(State(st): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let cb = st.codebook.read().await;
    let themes = export_theme_report(&cb, &st.report)?;
    Ok(match q.format.as_deref() {
        Some("md") | Some("markdown") => text_response("text/markdown; charset=utf-8", themes.to_markdown()),
        Some("csv") => text_response("text/csv; charset=utf-8", themes.to_csv()?),
        _ => Json(themes).into_response(),
    })
}

async fn export_table1(State(st): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let cb = st.codebook.read().await;
    let labels = |t: usize| cb.consensus_label(t).map(str::to_string);
    Ok(match q.format.as_deref() {
        Some("md") | Some("markdown") => text_response("text/markdown; charset=utf-8", st.report.to_markdown(&labels)),
        Some("csv") => text_response("text/csv; charset=utf-8", st.report.to_csv(&labels)?),
        _ => {
            let rows: Vec<Value> = st
                .report
                .summaries
                .iter()
                .map(|s| {
                    json!({
                        "rank": s.rank,
                        "topic_index": s.topic_index,
                        "label": labels(s.topic_index),
                        "weight": s.weight,
                        "top_words": s.top_words.iter().map(|w| w.word.as_str()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            Json(json!({ "rows": rows })).into_response()
        }
    })
}

async fn require_token(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|given| given == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn stamp_fingerprint(State(st): State<Arc<AppState>>, mut res: Response) -> Response {
    if let Ok(v) = HeaderValue::from_str(&st.report.model_fingerprint) {
        res.headers_mut().insert(FINGERPRINT_HEADER, v);
    }
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/report", get(get_report))
        .route("/api/topics", get(list_topics))
        .route("/api/topics/{i}", get(get_topic))
        .route("/api/topics/{i}/stories", get(topic_stories))
        .route("/api/topics/{i}/labels/{coder}", put(put_label))
        .route("/api/topics/{i}/status", put(put_status))
        .route("/api/topics/{i}/consensus", put(put_consensus))
        .route("/api/topics/{i}/theme", put(put_theme))
        .route("/api/codebook", get(get_codebook))
        .route("/api/export/themes", get(export_themes))
        .route("/api/export/table1", get(export_table1))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(middleware::map_response_with_state(state.clone(), stamp_fingerprint))
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), Error> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("listen address {addr}"), e))?;
    log::info!("serving on http://{}", listener.local_addr().map_err(|e| Error::io("listener", e))?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("http server", e))
}
