use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::{AnnotationStore, CorefLabel, GenderLabel, LabelSubmission, GUIDELINES};
use crate::corpus::Language;
use crate::error::Error;

type Shared = Arc<AnnotationStore>;

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match &self.0 {
            Error::InvalidLabel { field, message } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": self.0.to_string(), "field": field, "message": message }),
            ),
            Error::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, json!({ "error": self.0.to_string(), "field": "annotator" })),
            Error::Annotation(_) => (StatusCode::NOT_FOUND, json!({ "error": self.0.to_string() })),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": self.0.to_string() })),
        };
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
    /// Comma-separated instance ids the client has deferred.
    exclude: Option<String>,
}

fn required(q: &AnnotatorQuery) -> ApiResult<&str> {
    q.annotator.as_deref().filter(|a| !a.is_empty()).ok_or_else(|| {
        ApiError(Error::InvalidLabel {
            field: "annotator".into(),
            message: "query parameter is required".into(),
        })
    })
}

async fn next_task(State(store): State<Shared>, Query(q): Query<AnnotatorQuery>) -> ApiResult<Json<Value>> {
    let who = required(&q)?;
    let exclude: Vec<String> = q
        .exclude
        .as_deref()
        .unwrap_or("")
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let task = store.next_task(who, &exclude)?;
    let progress = store.progress(who)?;
    Ok(Json(json!({ "task": task, "progress": progress })))
}

fn field_str(body: &Value, field: &str) -> ApiResult<String> {
    match body.get(field) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::String(_)) | None | Some(Value::Null) => Err(ApiError(Error::InvalidLabel {
            field: field.into(),
            message: "required".into(),
        })),
        Some(_) => Err(ApiError(Error::InvalidLabel {
            field: field.into(),
            message: "expected a string".into(),
        })),
    }
}

async fn submit(State(store): State<Shared>, Json(body): Json<Value>) -> ApiResult<Json<Value>> {
    let sub = LabelSubmission {
        instance_id: field_str(&body, "instance_id")?,
        annotator_id: field_str(&body, "annotator_id")?,
        gender: field_str(&body, "gender")?,
        coreference: field_str(&body, "coreference")?,
    };
    let store2 = store.clone();
    let label = tokio::task::spawn_blocking(move || store2.submit(&sub))
        .await
        .map_err(|e| ApiError(Error::Annotation(format!("submit task failed: {e}"))))??;
    let progress = store.progress(&label.annotator_id)?;
    Ok(Json(json!({ "ok": true, "label": label, "progress": progress })))
}

async fn progress(State(store): State<Shared>, Query(q): Query<AnnotatorQuery>) -> ApiResult<Json<Value>> {
    match q.annotator.as_deref().filter(|a| !a.is_empty()) {
        Some(who) => Ok(Json(serde_json::to_value(store.progress(who)?).expect("serializable"))),
        None => {
            let all = store
                .annotators()
                .iter()
                .map(|a| store.progress(a))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Json(json!({ "annotators": all })))
        }
    }
}

async fn export(State(store): State<Shared>) -> ApiResult<Response> {
    let mut body = String::new();
    for l in store.current_labels() {
        body.push_str(&serde_json::to_string(&l).map_err(Error::from)?);
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn guidelines() -> Json<Value> {
    Json(json!({
        "text": GUIDELINES,
        "gender_categories": {
            "EN": GenderLabel::allowed(Language::EN),
            "DE": GenderLabel::allowed(Language::DE),
        },
        "coreference_categories": CorefLabel::ALL,
    }))
}

/// The annotation API, plus static UI assets from `ui_dir` when given.
pub fn router(store: Arc<AnnotationStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/labels", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .route("/api/guidelines", get(guidelines))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped. Binds `addr`, which defaults to
/// loopback in configuration.
pub async fn serve(store: Arc<AnnotationStore>, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation server listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir)).await
}
