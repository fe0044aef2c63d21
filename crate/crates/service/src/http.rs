//! JSON-over-HTTP interface.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kwexpert_core::corpus::CorpusError;
use kwexpert_core::rules::RuleError;
use serde::Serialize;
use serde_json::json;

use crate::engine::{DocumentInput, Engine, EngineError, SearchRequest};

#[derive(Debug, Serialize)]
struct ErrorBody {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

pub struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, line) = match &self.0 {
            EngineError::Query(_) => (StatusCode::BAD_REQUEST, "invalid_query", None),
            EngineError::Rules(RuleError::Syntax { line, .. }) => (StatusCode::BAD_REQUEST, "rule_syntax", Some(*line)),
            EngineError::Rules(_) => (StatusCode::BAD_REQUEST, "invalid_rules", None),
            EngineError::Corpus(CorpusError::DuplicateUri { .. }) => (StatusCode::CONFLICT, "duplicate_document", None),
            EngineError::Corpus(_) => (StatusCode::BAD_REQUEST, "invalid_document", None),
            EngineError::Unavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "unavailable", None),
            EngineError::TraceNotFound(_) => (StatusCode::NOT_FOUND, "not_found", None),
            EngineError::Cache(_) => (StatusCode::INTERNAL_SERVER_ERROR, "cache", None),
        };
        let body = ErrorBody {
            kind,
            message: self.0.to_string(),
            line,
        };
        (status, Json(json!({ "error": body }))).into_response()
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/explain/{trace_id}", get(explain))
        .route("/corpus/documents", post(ingest))
        .route("/rules", post(load_rules))
        .route("/stats", get(stats))
        .route("/health", get(health))
        .with_state(engine)
}

async fn search(State(engine): State<Arc<Engine>>, Json(req): Json<SearchRequest>) -> Result<Response, ApiError> {
    Ok(Json(engine.search(&req)?).into_response())
}

async fn explain(State(engine): State<Arc<Engine>>, Path(trace_id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(engine.explain(&trace_id)?).into_response())
}

async fn ingest(State(engine): State<Arc<Engine>>, Json(doc): Json<DocumentInput>) -> Result<Response, ApiError> {
    let doc_id = engine.ingest(&doc)?;
    let body = json!({ "doc_id": doc_id, "uri": doc.uri, "documents": engine.corpus().len() });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn load_rules(State(engine): State<Arc<Engine>>, body: String) -> Result<Response, ApiError> {
    Ok(Json(engine.load_rules(&body, "http")?).into_response())
}

async fn stats(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.stats()).into_response()
}

async fn health(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.health()).into_response()
}

/// Serves until Ctrl-C.
pub async fn serve(engine: Arc<Engine>) -> std::io::Result<()> {
    let addr = format!("{}:{}", engine.config().host, engine.config().port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
