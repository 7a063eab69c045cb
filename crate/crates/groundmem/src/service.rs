//! Memory service: shared state, the operations behind the HTTP API and the
//! CLI, and the axum router.
//!
//! Readers take a cheap clone of an `Arc<Memory>`. Ingestion works on a
//! private copy, persists it, and swaps it in, so readers always see a
//! consistent memory and never wait for an ingestion to finish. Only one
//! ingestion runs at a time.

use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use groundmem_core::agent::{Agent, AgentError, RouteSource, ToolResult, TOOL_DESCRIPTIONS_JSON};
use groundmem_core::query::ResultTable;
use groundmem_core::{GraphStats, Memory};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::ServiceConfig;
use crate::fixture::{load_fixture, FixtureError, FixtureRecord};
use crate::live::Providers;
use crate::snapshot::{load_snapshot, save_snapshot, SnapshotError};
use crate::time::to_rfc3339;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("cannot rebuild the vector index: {0}")]
    Index(String),
}

pub struct AppState {
    pub config: ServiceConfig,
    pub providers: Providers,
    memory: RwLock<Arc<Memory>>,
    ingesting: AtomicBool,
    persist: bool,
}

/// Held while an ingestion runs.
pub struct IngestGuard<'a>(&'a AtomicBool);

impl Drop for IngestGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub notes_created: usize,
    pub entities_created: usize,
    pub errors: Vec<IngestFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRef {
    pub note_id: String,
    pub snippet: String,
    pub data_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub tool: &'static str,
    pub detail: String,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<ResultTable>,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AskResponseBody {
    pub answer: String,
    pub sources: Vec<SourceRef>,
    pub trace: Vec<TraceEntry>,
    pub routed_by: RouteSource,
    pub no_context: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityRef {
    pub label: String,
    #[serde(rename = "type")]
    pub entity_type: &'static str,
    pub mention_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbors {
    pub previous: Option<String>,
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteView {
    pub id: String,
    pub kind: &'static str,
    pub plain_caption: String,
    pub raw_caption: String,
    pub created_at: String,
    pub sequence_index: Option<u64>,
    pub data_files: Vec<String>,
    pub entities: Vec<EntityRef>,
    pub neighbors: Neighbors,
}

const SNIPPET_CHARS: usize = 160;

fn snippet(text: &str) -> String {
    let mut s: String = text.chars().take(SNIPPET_CHARS).collect();
    if text.chars().count() > SNIPPET_CHARS {
        s.push_str("...");
    }
    s
}

fn trace_entry(r: &ToolResult) -> TraceEntry {
    let detail = match (&r.error, &r.table, &r.generated_query) {
        (Some(e), _, _) => format!("failed: {e}"),
        (None, Some(t), Some(q)) => format!("query `{q}` returned {} row(s)", t.rows.len()),
        _ => format!("{} note(s)", r.context_notes.len()),
    };
    TraceEntry {
        tool: r.tool.name(),
        detail,
        notes: r.context_notes.iter().map(|n| n.note_id.to_string()).collect(),
        query: r.generated_query.clone(),
        table: r.table.clone(),
        diagnostics: r.diagnostics.clone(),
        error: r.error.clone(),
    }
}

pub fn note_view(memory: &Memory, id: &str) -> Option<NoteView> {
    let g = memory.graph();
    let n = g.note(id)?;
    Some(NoteView {
        id: n.id.to_string(),
        kind: n.kind.name(),
        plain_caption: n.plain_caption.clone(),
        raw_caption: n.caption.clone(),
        created_at: to_rfc3339(n.created_at),
        sequence_index: n.sequence_index,
        data_files: n.data_files.clone(),
        entities: g
            .entities_of(id)
            .into_iter()
            .map(|e| EntityRef { label: e.label.clone(), entity_type: e.entity_type.name(), mention_count: e.mention_count })
            .collect(),
        neighbors: Neighbors {
            previous: g.previous_image(id).map(|p| p.id.to_string()),
            next: g.next_image(id).map(|p| p.id.to_string()),
        },
    })
}

/// Resolves a relative path under `root`, refusing anything that could
/// leave it.
pub fn resolve_under(root: &Path, relative: &str) -> Option<PathBuf> {
    let rel = Path::new(relative);
    if relative.is_empty() || relative.contains('\\') {
        return None;
    }
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

impl AppState {
    pub fn new(config: ServiceConfig, providers: Providers, memory: Memory) -> Self {
        Self { config, providers, memory: RwLock::new(Arc::new(memory)), ingesting: AtomicBool::new(false), persist: true }
    }

    /// State that never writes snapshots.
    pub fn ephemeral(config: ServiceConfig, providers: Providers, memory: Memory) -> Self {
        Self { persist: false, ..Self::new(config, providers, memory) }
    }

    /// Loads the snapshot in the data directory, or starts empty.
    pub fn open(config: ServiceConfig, providers: Providers) -> Result<Self, ServiceError> {
        let memory = load_memory(&config)?;
        Ok(Self::new(config, providers, memory))
    }

    pub fn memory(&self) -> Arc<Memory> {
        self.memory.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn try_begin_ingest(&self) -> Option<IngestGuard<'_>> {
        self.ingesting
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .ok()
            .map(|_| IngestGuard(&self.ingesting))
    }

    /// Ingests `records` as one new stream. Each record succeeds or is
    /// skipped and reported. Requires the ingestion guard.
    pub fn ingest(&self, _guard: &IngestGuard<'_>, records: &[FixtureRecord]) -> Result<IngestReport, ServiceError> {
        let mut memory = (*self.memory()).clone();
        let report = ingest_records(&mut memory, records, &self.config, &self.providers);
        if report.notes_created > 0 {
            if self.persist {
                save_snapshot(memory.graph(), &self.config.snapshot_path())?;
            }
            *self.memory.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(memory);
        }
        Ok(report)
    }

    pub fn ask(&self, question: &str) -> Result<AskResponseBody, AgentError> {
        ask(&self.memory(), question, &self.config, &self.providers)
    }
}

pub fn load_memory(config: &ServiceConfig) -> Result<Memory, ServiceError> {
    let path = config.snapshot_path();
    let memory = if path.exists() {
        Memory::from_graph(load_snapshot(&path)?).map_err(|e| ServiceError::Index(e.to_string()))?
    } else {
        Memory::new()
    };
    Ok(memory.with_embed_model(config.provider.embed_model()))
}

pub fn ingest_records(
    memory: &mut Memory,
    records: &[FixtureRecord],
    config: &ServiceConfig,
    providers: &Providers,
) -> IngestReport {
    let params = config.perception_params();
    let mut report = IngestReport::default();
    memory.begin_stream();
    for (index, record) in records.iter().enumerate() {
        let outcome = record.to_item(&params).and_then(|item| memory.ingest(item, &*providers.embedder).map_err(|e| e.to_string()));
        match outcome {
            Ok(o) => {
                report.notes_created += 1;
                report.entities_created += o.entities_created;
            }
            Err(error) => report.errors.push(IngestFailure { index, error }),
        }
    }
    report
}

pub fn ask(memory: &Memory, question: &str, config: &ServiceConfig, providers: &Providers) -> Result<AskResponseBody, AgentError> {
    let agent = Agent::new(memory, &*providers.chat, &*providers.embedder).with_config(config.agent_config());
    let answer = agent.answer_question(question)?;
    let sources = answer
        .sources
        .iter()
        .filter_map(|id| memory.graph().note(id.as_str()))
        .map(|n| SourceRef { note_id: n.id.to_string(), snippet: snippet(&n.plain_caption), data_files: n.data_files.clone() })
        .collect();
    Ok(AskResponseBody {
        answer: answer.text,
        sources,
        trace: answer.trace.iter().map(trace_entry).collect(),
        routed_by: answer.routed_by,
        no_context: answer.no_context,
    })
}

/// Plain-text rendering of an answer, stable for identical inputs.
pub fn format_answer(body: &AskResponseBody) -> String {
    let mut out = format!("answer: {}\nsources:\n", body.answer);
    if body.sources.is_empty() {
        out.push_str("  (none)\n");
    }
    for s in &body.sources {
        out.push_str(&format!("  [{}] {}\n", s.note_id, s.snippet));
    }
    out.push_str("trace:\n");
    for t in &body.trace {
        out.push_str(&format!("  {}: {}\n", t.tool, t.detail));
        for d in &t.diagnostics {
            out.push_str(&format!("    - {d}\n"));
        }
    }
    out
}

pub fn format_stats(stats: &GraphStats) -> String {
    let e = &stats.entity_counts_by_type;
    let k = &stats.edge_counts_by_kind;
    format!(
        "image_count {}\nnote_count {}\nentities Agent {}\nentities Object {}\nentities Action {}\n\
         edges HAS_PREVIOUS {}\nedges HAS_ELEMENT {}\nchain_count {}\n",
        stats.image_count, stats.note_count, e.agent, e.object, e.action, k.has_previous, k.has_element, stats.chain_count
    )
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestBody {
    #[serde(default)]
    pub captions: Option<Vec<FixtureRecord>>,
    /// Fixture path relative to the data directory.
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequestBody {
    pub question: String,
}

async fn ingest_handler(State(state): State<Arc<AppState>>, body: Result<Json<IngestBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let records = match (body.captions, body.fixture) {
        (Some(c), None) => c,
        (None, Some(f)) => {
            let Some(path) = resolve_under(&state.config.data_dir, &f) else {
                return error(StatusCode::BAD_REQUEST, format!("fixture path `{f}` must stay inside the data directory"));
            };
            match load_fixture(&path) {
                Ok(r) => r,
                Err(e @ FixtureError::Io { .. }) => return error(StatusCode::NOT_FOUND, e.to_string()),
                Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
            }
        }
        _ => return error(StatusCode::BAD_REQUEST, "give exactly one of `captions` or `fixture`"),
    };
    let task = tokio::task::spawn_blocking(move || {
        let Some(guard) = state.try_begin_ingest() else {
            return error(StatusCode::CONFLICT, "another ingestion is in progress");
        };
        match state.ingest(&guard, &records) {
            Ok(report) if report.errors.is_empty() => (StatusCode::OK, Json(report)).into_response(),
            Ok(report) => (StatusCode::UNPROCESSABLE_ENTITY, Json(report)).into_response(),
            Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    });
    task.await.unwrap_or_else(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn ask_handler(State(state): State<Arc<AppState>>, body: Result<Json<AskRequestBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let task = tokio::task::spawn_blocking(move || match state.ask(&body.question) {
        Ok(answer) => (StatusCode::OK, Json(answer)).into_response(),
        Err(AgentError::EmptyQuestion) => error(StatusCode::BAD_REQUEST, "question is empty"),
        Err(e @ AgentError::Provider(_)) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    });
    task.await.unwrap_or_else(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn note_handler(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match note_view(&state.memory(), &id) {
        Some(view) => Json(view).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown note `{id}`")),
    }
}

async fn stats_handler(State(state): State<Arc<AppState>>) -> Response {
    Json(state.memory().graph().stats()).into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("md" | "txt") => "text/plain; charset=utf-8",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn file_handler(State(state): State<Arc<AppState>>, UrlPath(path): UrlPath<String>) -> Response {
    let Some(full) = resolve_under(&state.config.data_dir, &path) else {
        return error(StatusCode::BAD_REQUEST, "path must be relative and stay inside the data directory");
    };
    match tokio::fs::read(&full).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&full))], Body::from(bytes)).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no file `{path}`")),
    }
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let mode = match state.providers.mode {
        crate::config::ProviderMode::Stub => "stub",
        crate::config::ProviderMode::Live => "live",
    };
    Json(json!({"status": "ok", "provider_mode": mode, "note_count": state.memory().graph().stats().note_count}))
        .into_response()
}

async fn tools_handler() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], TOOL_DESCRIPTIONS_JSON).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ingest", post(ingest_handler))
        .route("/ask", post(ask_handler))
        .route("/notes/{id}", get(note_handler))
        .route("/graph/stats", get(stats_handler))
        .route("/files/{*path}", get(file_handler))
        .route("/health", get(health_handler))
        .route("/tools", get(tools_handler))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
