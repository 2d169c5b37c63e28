//! JSON HTTP API over [`SessionManager`].
//!
//! | method | path                     | success |
//! |--------|--------------------------|---------|
//! | POST   | `/sessions`              | 201     |
//! | GET    | `/sessions/{id}`         | 200     |
//! | POST   | `/sessions/{id}/answer`  | 200     |
//! | GET    | `/health`                | 200     |
//!
//! Errors are `{"error": {"code", "message", "retriable"}}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clarify_core::session::{ClarifySession, SessionError};
use clarify_core::{MissingInfoCategory, Route};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::pipeline::{SessionManager, SessionOpError, StepError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryView {
    pub letter: char,
    pub name: String,
}

impl From<MissingInfoCategory> for CategoryView {
    fn from(c: MissingInfoCategory) -> Self {
        Self { letter: c.letter(), name: c.name().into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictView {
    pub snapped: f64,
    pub label: String,
}

/// Wire form of a [`ClarifySession`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResource {
    pub id: String,
    pub state: String,
    pub statement: String,
    pub question: Option<String>,
    pub categories: Vec<CategoryView>,
    pub route: Option<Route>,
    pub answer: Option<String>,
    pub verdict: Option<VerdictView>,
    pub message: Option<String>,
}

impl From<&ClarifySession> for SessionResource {
    fn from(s: &ClarifySession) -> Self {
        Self {
            id: s.id.clone(),
            state: s.state().as_str().into(),
            statement: s.statement.clone(),
            question: s.question.clone(),
            categories: s.categories.iter().copied().map(Into::into).collect(),
            route: s.route,
            answer: s.answer.clone(),
            verdict: s.verdict().map(|v| VerdictView { snapped: v.value(), label: v.snapped.label().into() }),
            message: s.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub retriable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, retriable: bool) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), retriable, session_id: None } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message, false)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorEnvelope { error: self.body })).into_response()
    }
}

impl From<SessionOpError> for ApiError {
    fn from(e: SessionOpError) -> Self {
        let message = e.to_string();
        match e {
            SessionOpError::Invalid(SessionError::WrongState { .. }) => {
                Self::new(StatusCode::CONFLICT, "wrong_state", message, false)
            }
            SessionOpError::Invalid(_) => Self::bad_request(message),
            SessionOpError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message, false),
            SessionOpError::Step { id, source } => {
                let retriable = source.retriable() || matches!(source, StepError::Parse(_));
                let mut err = Self::new(StatusCode::BAD_GATEWAY, "backend_failure", message, retriable);
                err.body.session_id = Some(id);
                err
            }
            SessionOpError::Store(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", message, true)
            }
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("request body is empty"));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct CreateBody {
    statement: String,
}

#[derive(Deserialize)]
struct AnswerBody {
    answer: String,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionOpError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), true))?
        .map_err(ApiError::from)
}

async fn create_session(
    State(mgr): State<Arc<SessionManager>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionResource>), ApiError> {
    let CreateBody { statement } = parse_body(&body)?;
    if statement.trim().is_empty() {
        return Err(ApiError::bad_request("statement is empty"));
    }
    let s = blocking(move || mgr.begin_session(&statement)).await?;
    Ok((StatusCode::CREATED, Json(SessionResource::from(&s))))
}

async fn get_session(
    State(mgr): State<Arc<SessionManager>>,
    Path(id): Path<String>,
) -> Result<Json<SessionResource>, ApiError> {
    let s = blocking(move || mgr.get(&id)).await?;
    Ok(Json(SessionResource::from(&s)))
}

async fn answer_session(
    State(mgr): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionResource>, ApiError> {
    let AnswerBody { answer } = parse_body(&body)?;
    let s = blocking(move || mgr.answer_session(&id, &answer)).await?;
    Ok(Json(SessionResource::from(&s)))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer_session))
        .route("/health", get(health))
        .with_state(manager)
}

/// Serves until Ctrl-C.
pub async fn serve(bind: SocketAddr, manager: Arc<SessionManager>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
