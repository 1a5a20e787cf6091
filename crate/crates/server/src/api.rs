//! HTTP routes. Engine calls block (provider I/O, fsync), so each one runs
//! on the blocking pool.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use wayfare_core::domain::{Choice, FeedbackRecord, Query, QuerySource};
use wayfare_core::orchestrator::{Answer, Engine, NextAction, Session, SessionId};
use wayfare_core::runtime::{bundled_scenarios, Scenario};
use wayfare_core::store::any_state;

use crate::error::ApiError;
use crate::reports::{build_report, ReportKind};

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self { engine }
    }
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: SessionId,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    text: String,
    /// Set when the text came from one of the starter scenarios.
    #[serde(default)]
    scenario_key: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    skip: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChoiceBody {
    choice: Choice,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("malformed request body: {e}")))
}

fn session_id(raw: &str) -> Result<SessionId, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found("session_not_found", format!("session {raw} not found")))
}

async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ApiError> + Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn scenarios() -> Json<Vec<Scenario>> {
    Json(bundled_scenarios())
}

async fn create_session(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let s = blocking(&state, |e| Ok(e.start_session()?)).await?;
    Ok((StatusCode::CREATED, Json(Created { session_id: s.id })))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    let id = session_id(&id)?;
    blocking(&state, move |e| Ok(Json(e.get_session(&id)?))).await
}

async fn submit_query(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<NextAction>, ApiError> {
    let id = session_id(&id)?;
    let body: QueryBody = parse(&body)?;
    let source = match &body.scenario_key {
        Some(key) if bundled_scenarios().iter().any(|s| &s.key == key) => QuerySource::PredefinedScenario,
        Some(key) => return Err(ApiError::validation(format!("unknown scenario {key:?}"))),
        None => QuerySource::FreeText,
    };
    blocking(&state, move |e| {
        let q = Query::new(&body.text, source, e.clock().now()).map_err(|x| ApiError::validation(x.to_string()))?;
        Ok(Json(e.submit_query(&id, q)?))
    })
    .await
}

async fn submit_answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<NextAction>, ApiError> {
    let id = session_id(&id)?;
    let answer = match parse::<AnswerBody>(&body)? {
        AnswerBody {
            text: Some(t),
            skip: false,
        } => Answer::Text(t),
        AnswerBody { text: None, skip: true } => Answer::Skip,
        _ => return Err(ApiError::validation("send either {\"text\": ...} or {\"skip\": true}")),
    };
    blocking(&state, move |e| Ok(Json(e.submit_answer(&id, answer)?))).await
}

async fn record_choice(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<NextAction>, ApiError> {
    let id = session_id(&id)?;
    let ChoiceBody { choice } = parse(&body)?;
    blocking(&state, move |e| Ok(Json(e.record_choice(&id, choice)?))).await
}

async fn record_feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<NextAction>, ApiError> {
    let id = session_id(&id)?;
    let feedback: FeedbackRecord = parse(&body)?;
    blocking(&state, move |e| Ok(Json(e.record_feedback(&id, feedback)?))).await
}

async fn report(State(state): State<AppState>, Path(kind): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let kind: ReportKind = kind.parse().map_err(|m| ApiError::not_found("unknown_report", m))?;
    blocking(&state, move |e| {
        let sessions = e
            .store()
            .load_all(&any_state)
            .map_err(|x| ApiError::internal(x.to_string()).with_code("persistence_error"))?;
        Ok(Json(build_report(kind, &sessions)?))
    })
    .await
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such route")
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let router = Router::new()
        .route("/healthz", get(healthz))
        .route("/scenarios", get(scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(submit_query))
        .route("/sessions/{id}/answer", post(submit_answer))
        .route("/sessions/{id}/choice", post(record_choice))
        .route("/sessions/{id}/feedback", post(record_feedback))
        .route("/reports/{kind}", get(report))
        .fallback(fallback)
        .with_state(state);
    let origins: Vec<HeaderValue> = cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o.trim()).ok())
        .collect();
    if origins.is_empty() {
        router
    } else {
        router.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods(Any)
                .allow_headers(Any),
        )
    }
}
