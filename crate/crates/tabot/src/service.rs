//! HTTP API over a [`Registry`].
//!
//! Bodies are JSON documents carrying `api_version`; errors are
//! `{"api_version": 1, "error": {"code", "message", "details"?}}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use tabot_core::dialogue::Rating;
use tabot_core::ingest::{IngestError, SourceMeta};
use tabot_core::schema::Enrichment;
use tower_http::services::ServeDir;

use crate::csv_source::CsvOptions;
use crate::registry::{Registry, RegistryError};
use crate::store::{StoreError, StrategyChoice};

pub const API_VERSION: u32 = 1;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<JsonValue>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.details {
            error["details"] = d;
        }
        (self.status, Json(json!({ "api_version": API_VERSION, "error": error }))).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> ApiError {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            RegistryError::Store(StoreError::UnknownDataset(_)) => ApiError::new(S::NOT_FOUND, "unknown_dataset", msg),
            RegistryError::Store(StoreError::NoBundle(_)) | RegistryError::NoActiveBundle(_) => {
                ApiError::new(S::CONFLICT, "no_active_bundle", msg)
            }
            RegistryError::Store(StoreError::Ingest(i)) => {
                let (code, details) = match &i {
                    IngestError::MalformedCsv { row, reason } => {
                        ("malformed_csv", Some(json!({ "row": row, "reason": reason })))
                    }
                    IngestError::DuplicateColumnName(n) => ("duplicate_column_name", Some(json!({ "name": n }))),
                    IngestError::EmptyInput => ("empty_input", None),
                    IngestError::UnknownField(_) => ("unknown_field", None),
                };
                ApiError {
                    status: S::BAD_REQUEST,
                    code,
                    message: msg,
                    details,
                }
            }
            RegistryError::Rejected(diags) => ApiError {
                status: S::UNPROCESSABLE_ENTITY,
                code: "schema_rejected",
                message: msg,
                details: Some(json!(diags)),
            },
            RegistryError::GenerationInProgress(_) => ApiError::new(S::CONFLICT, "generation_in_progress", msg),
            RegistryError::UnknownTurn(_) => ApiError::new(S::NOT_FOUND, "unknown_turn", msg),
            RegistryError::Store(_) => ApiError::new(S::INTERNAL_SERVER_ERROR, "storage_error", "storage failure"),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn doc<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let mut v = serde_json::to_value(body).expect("documents serialize");
    if let JsonValue::Object(m) = &mut v {
        m.insert("api_version".into(), json!(API_VERSION));
    }
    (status, Json(v)).into_response()
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, RegistryError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(_) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "request failed")),
    }
}

fn now() -> chrono::NaiveDateTime {
    chrono::Local::now().naive_local()
}

type AppState = Arc<Registry>;

#[derive(Debug, Deserialize)]
struct UploadQuery {
    name: Option<String>,
    delimiter: Option<char>,
    header: Option<bool>,
}

async fn upload(State(reg): State<AppState>, Query(q): Query<UploadQuery>, body: Bytes) -> ApiResult {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_input", "empty input"));
    }
    let mut csv = CsvOptions {
        ingest: tabot_core::ingest::IngestOptions {
            categorical_threshold: reg.config().categorical_threshold,
            ..Default::default()
        },
        ..Default::default()
    };
    if let Some(d) = q.delimiter {
        csv.delimiter = d;
    }
    if let Some(h) = q.header {
        csv.has_header = h;
    }
    let source = SourceMeta {
        origin: q.name.unwrap_or_else(|| "upload.csv".into()),
        imported_at: Some(now()),
    };
    let r = reg.clone();
    let d = blocking(move || r.upload(&body, source, csv)).await?;
    Ok(doc(StatusCode::CREATED, &d))
}

async fn list(State(reg): State<AppState>) -> ApiResult {
    let ids = reg.store().list().map_err(RegistryError::from)?;
    Ok(doc(StatusCode::OK, &json!({ "datasets": ids })))
}

async fn get_schema(State(reg): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d = blocking(move || reg.schema(&id)).await?;
    Ok(doc(StatusCode::OK, &d))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PatchBody {
    Wrapped { commands: Vec<Enrichment> },
    Bare(Vec<Enrichment>),
}

async fn patch_schema(State(reg): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let commands = match parse::<PatchBody>(&body)? {
        PatchBody::Wrapped { commands } | PatchBody::Bare(commands) => commands,
    };
    let d = blocking(move || reg.patch(&id, &commands)).await?;
    Ok(doc(StatusCode::OK, &d))
}

#[derive(Deserialize, Default)]
struct BotRequest {
    #[serde(default)]
    strategy: StrategyChoice,
}

async fn generate_bot(State(reg): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: BotRequest = if body.iter().all(u8::is_ascii_whitespace) {
        BotRequest::default()
    } else {
        parse(&body)?
    };
    let d = blocking(move || reg.generate(&id, req.strategy)).await?;
    Ok(doc(StatusCode::CREATED, &d))
}

#[derive(Deserialize)]
struct ChatRequest {
    #[serde(default)]
    session_id: Option<String>,
    utterance: String,
}

async fn chat(State(reg): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: ChatRequest = parse(&body)?;
    if let Some(s) = &req.session_id {
        if s.is_empty() || s.len() > 128 {
            return Err(ApiError::bad_request("session_id must be 1 to 128 characters"));
        }
    }
    let t = now();
    let d = blocking(move || reg.chat(&id, req.session_id.as_deref(), &req.utterance, t)).await?;
    Ok(doc(StatusCode::OK, &d))
}

#[derive(Deserialize)]
struct RatingRequest {
    turn_index: usize,
    rating: Rating,
}

async fn rate(State(reg): State<AppState>, Path((id, session)): Path<(String, String)>, body: Bytes) -> ApiResult {
    let req: RatingRequest = parse(&body)?;
    let t = now();
    let d = blocking(move || reg.rate(&id, &session, req.turn_index, req.rating, t)).await?;
    Ok(doc(StatusCode::OK, &json!({ "record": d })))
}

async fn log(State(reg): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d = blocking(move || reg.log(&id)).await?;
    Ok(doc(StatusCode::OK, &json!({ "records": d.records })))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(registry: Arc<Registry>) -> Router {
    let ui = registry.config().ui_dir.clone();
    let api = Router::new()
        .route("/datasets", post(upload).get(list))
        .route("/datasets/:id/schema", get(get_schema).patch(patch_schema))
        .route("/datasets/:id/bot", post(generate_bot))
        .route("/datasets/:id/chat", post(chat))
        .route("/datasets/:id/chat/:session/rating", post(rate))
        .route("/datasets/:id/log", get(log))
        .with_state(registry);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}
