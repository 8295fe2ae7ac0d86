//! HTTP API over discovery sessions with a server-sent event stream of
//! session deltas.

use std::collections::HashMap;
use std::convert::Infallible;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use udi_core::agents::Agents;
use udi_core::data::{summarize_fields, DatasetStore};
use udi_core::filter::{FilterError, FilterUpdate};
use udi_core::session::{Session, SessionDelta, SessionError, SelectionPayload, SharedSession};

const EVENT_BUFFER: usize = 256;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_owned(),
            message: message.into(),
            path: None,
        }
    }

    fn not_found(code: &str, what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, format!("unknown {what} '{id}'"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Busy => ApiError::new(StatusCode::CONFLICT, "busy", message),
            SessionError::UnknownFilter(_) | SessionError::Filter(FilterError::UnknownId(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "filter_not_found", message)
            }
            SessionError::UnknownView(_) => ApiError::new(StatusCode::NOT_FOUND, "view_not_found", message),
            SessionError::UnknownEntity(_) => ApiError::new(StatusCode::NOT_FOUND, "entity_not_found", message),
            SessionError::SelectionKindMismatch { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "selection_kind_mismatch", message)
            }
            SessionError::Filter(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_filter", message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

struct SessionEntry {
    session: SharedSession,
    events: broadcast::Sender<SessionDelta>,
}

/// Shared server state: the loaded data, agent configuration and every
/// live session.
pub struct AppState {
    store: Arc<DatasetStore>,
    agents: Agents,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    next_id: AtomicU64,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: Arc<DatasetStore>, agents: Agents) -> Self {
        AppState {
            store,
            agents,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            log_dir: None,
        }
    }

    /// Appends each session's deltas to `<dir>/<session id>.jsonl`.
    pub fn with_delta_log(mut self, dir: PathBuf) -> Self {
        self.log_dir = Some(dir);
        self
    }

    fn create_session(&self) -> String {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let sender = events.clone();
        let log_path = self.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
        let hook = move |delta: &SessionDelta| {
            if let Some(path) = &log_path {
                if let Ok(mut file) = OpenOptions::new().create(true).append(true).open(path) {
                    let _ = writeln!(file, "{}", delta.log_record());
                }
            }
            let _ = sender.send(delta.clone());
        };
        let session = SharedSession::new(Session::new(id.clone(), self.store.clone()), self.agents.clone())
            .with_hook(Arc::new(hook));
        let entry = Arc::new(SessionEntry { session, events });
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), entry);
        id
    }

    fn session(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session_not_found", "session", id))
    }
}

type AppResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(schema))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(snapshot))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/filters/{fid}", patch(patch_filter).delete(delete_filter))
        .route("/api/sessions/{id}/views/{vid}/selection", post(post_selection).delete(delete_selection))
        .route("/api/sessions/{id}/views/{vid}/data", get(view_data))
        .route("/api/sessions/{id}/entities/{entity}/rows", get(entity_rows))
        .route("/api/sessions/{id}/export", get(export))
        .route("/api/sessions/{id}/events", get(events))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
        })
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "schema": state.store.schema(),
        "fields": summarize_fields(&state.store, state.agents.cardinality_cap),
    }))
}

async fn create_session(State(state): State<Arc<AppState>>) -> (StatusCode, Json<serde_json::Value>) {
    let id = state.create_session();
    (StatusCode::CREATED, Json(json!({"session_id": id, "seq": 0})))
}

async fn snapshot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    Ok(Json(state.session(&id)?.session.snapshot()).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> AppResult<Json<SessionDelta>> {
    let entry = state.session(&id)?;
    let Json(MessageBody { text }) = body?;
    if text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", "message text is empty"));
    }
    // Agents may block on remote calls.
    let delta = tokio::task::spawn_blocking(move || entry.session.handle_message(&text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(delta))
}

async fn patch_filter(
    State(state): State<Arc<AppState>>,
    Path((id, fid)): Path<(String, String)>,
    body: Result<Json<FilterUpdate>, JsonRejection>,
) -> AppResult<Json<SessionDelta>> {
    let entry = state.session(&id)?;
    let Json(update) = body?;
    Ok(Json(entry.session.update_filter_widget(&fid, &update)?))
}

async fn delete_filter(
    State(state): State<Arc<AppState>>,
    Path((id, fid)): Path<(String, String)>,
) -> AppResult<Json<SessionDelta>> {
    Ok(Json(state.session(&id)?.session.remove_filter(&fid)?))
}

async fn post_selection(
    State(state): State<Arc<AppState>>,
    Path((id, vid)): Path<(String, String)>,
    body: Result<Json<SelectionPayload>, JsonRejection>,
) -> AppResult<Json<SessionDelta>> {
    let entry = state.session(&id)?;
    let Json(payload) = body?;
    Ok(Json(entry.session.apply_selection(&vid, &payload)?))
}

async fn delete_selection(
    State(state): State<Arc<AppState>>,
    Path((id, vid)): Path<(String, String)>,
) -> AppResult<Json<SessionDelta>> {
    Ok(Json(state.session(&id)?.session.clear_selection(&vid)?))
}

async fn view_data(State(state): State<Arc<AppState>>, Path((id, vid)): Path<(String, String)>) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let table = entry.session.lock().get_view_data(&vid)?;
    Ok(Json(table).into_response())
}

#[derive(Deserialize)]
struct RowsQuery {
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

async fn entity_rows(
    State(state): State<Arc<AppState>>,
    Path((id, entity)): Path<(String, String)>,
    query: Result<Query<RowsQuery>, QueryRejection>,
) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let Query(q) = query?;
    let table = entry.session.lock().entity_rows(&entity, q.offset, q.limit)?;
    Ok(Json(table).into_response())
}

#[derive(Deserialize, Default, PartialEq)]
#[serde(rename_all = "lowercase")]
enum ExportFormat {
    #[default]
    Json,
    Text,
}

#[derive(Deserialize)]
struct ExportQuery {
    entity: Option<String>,
    #[serde(default)]
    format: ExportFormat,
}

async fn export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let Query(q) = query?;
    let entity = q
        .entity
        .unwrap_or_else(|| state.store.schema().dataset_entity().name.clone());
    let session = entry.session.lock();
    let ids = session.export_visible(Some(&entity))?;
    Ok(match q.format {
        ExportFormat::Json => Json(json!({
            "entity": entity,
            "ids": ids,
            "filter_version": session.filters().version,
        }))
        .into_response(),
        ExportFormat::Text => {
            let mut body = ids.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
        }
    })
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> AppResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let entry = state.session(&id)?;
    let stream = BroadcastStream::new(entry.events.subscribe()).filter_map(|item| {
        // A lagging client skips deltas and resyncs from the snapshot on the seq gap.
        let delta = item.ok()?;
        let data = serde_json::to_string(&delta).ok()?;
        Some(Ok(Event::default().event("delta").id(delta.seq.to_string()).data(data)))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
