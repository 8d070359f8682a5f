//! HTTP API for dispatcher consoles.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/calls?source=<id>` | upload a WAV body, returns `202` with the call id |
//! | GET | `/queue` | live queue, most urgent first |
//! | GET | `/calls?status=<status>` | call summaries |
//! | GET | `/calls/{id}` | full call record |
//! | POST | `/calls/{id}/claim` | `{"dispatcher_id": ..}` |
//! | POST | `/queue/claim-next` | claim the head of the queue, `204` when empty |
//! | POST | `/calls/{id}/triage` | ESI or START decision |
//! | POST | `/calls/{id}/close` | |
//! | GET | `/calls/{id}/audio` | original upload |
//! | GET | `/calls/{id}/cad` | CAD export package |
//! | GET | `/events` | server-sent queue events |
//! | GET | `/config` | thresholds, weights, level descriptions |
//! | GET | `/health` | liveness, never authenticated |
//!
//! Errors are `{"error": <code>, "message": <text>}`.

use std::convert::Infallible;
use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

use crate::bioacoustics::DistressWeights;
use crate::config::SlaHints;
use crate::content::ContentWeights;
use crate::queue::{CallId, QueueLevel, RoutingThresholds};
use crate::record::{CallStatus, TriageDecision};
use crate::service::{CallService, ServiceError};
use crate::store::StoreError;

const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn error_body(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(json!({"error": code, "message": message.into()})),
    )
        .into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::InvalidAudio(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_audio"),
            ServiceError::InvalidRequest(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")
            }
            ServiceError::Storage(StoreError::StorageFull) => {
                (StatusCode::INSUFFICIENT_STORAGE, "storage_full")
            }
            ServiceError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_error"),
        };
        error_body(status, code, self.0.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
struct SubmitQuery {
    source: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    status: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub dispatcher_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub call_id: CallId,
    pub status: CallStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: QueueLevel,
    pub label: String,
    pub rank: u8,
    pub dispatcher_action: String,
    pub protocol_guidance: String,
    pub sla_hint: Option<String>,
}

/// What `/config` exposes. Backend URLs and the API token stay private.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigView {
    pub thresholds: RoutingThresholds,
    pub distress_weights: DistressWeights,
    pub content_weights: ContentWeights,
    pub sla_hints: SlaHints,
    pub levels: Vec<LevelInfo>,
}

pub fn router(service: CallService) -> Router {
    let protected = Router::new()
        .route("/calls", post(submit_call).get(list_calls))
        .route("/calls/{id}", get(get_call))
        .route("/calls/{id}/claim", post(claim))
        .route("/calls/{id}/triage", post(triage))
        .route("/calls/{id}/close", post(close))
        .route("/calls/{id}/audio", get(audio))
        .route("/calls/{id}/cad", get(cad))
        .route("/queue", get(queue))
        .route("/queue/claim-next", post(claim_next))
        .route("/events", get(events))
        .route("/config", get(config))
        .layer(middleware::from_fn_with_state(
            service.clone(),
            require_token,
        ));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

/// Serve until ctrl-c.
pub async fn serve(service: CallService, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn require_token(
    State(svc): State<CallService>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    if let Some(token) = &svc.config().service.api_token {
        let supplied = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if supplied != Some(token.as_str()) {
            return error_body(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            );
        }
    }
    next.run(req).await
}

async fn health(State(svc): State<CallService>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "queued": svc.get_queue().len()}))
}

async fn submit_call(
    State(svc): State<CallService>,
    Query(q): Query<SubmitQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SubmitResponse>)> {
    let call_id = svc.submit_call(&body, q.source.as_deref())?;
    Ok((
        StatusCode::ACCEPTED,
        Json(SubmitResponse {
            call_id,
            status: CallStatus::Processing,
        }),
    ))
}

async fn list_calls(
    State(svc): State<CallService>,
    Query(q): Query<ListQuery>,
) -> ApiResult<Response> {
    let status = match q.status.as_deref() {
        None => None,
        Some(s) => Some(
            CallStatus::parse(s)
                .ok_or_else(|| ServiceError::InvalidRequest(format!("unknown status {s:?}")))?,
        ),
    };
    Ok(Json(svc.list_calls(status)).into_response())
}

async fn get_call(State(svc): State<CallService>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.get_call(&CallId(id))?).into_response())
}

async fn claim(
    State(svc): State<CallService>,
    Path(id): Path<String>,
    Json(req): Json<ClaimRequest>,
) -> ApiResult<Response> {
    Ok(Json(svc.claim(&CallId(id), &req.dispatcher_id)?).into_response())
}

async fn claim_next(
    State(svc): State<CallService>,
    Json(req): Json<ClaimRequest>,
) -> ApiResult<Response> {
    Ok(match svc.claim_next(&req.dispatcher_id)? {
        Some(r) => Json(r).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn triage(
    State(svc): State<CallService>,
    Path(id): Path<String>,
    Json(decision): Json<TriageDecision>,
) -> ApiResult<Response> {
    Ok(Json(svc.submit_triage(&CallId(id), decision)?).into_response())
}

async fn close(State(svc): State<CallService>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.close(&CallId(id))?).into_response())
}

async fn audio(State(svc): State<CallService>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = svc.audio(&CallId(id))?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

async fn cad(State(svc): State<CallService>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.export_cad(&CallId(id))?).into_response())
}

async fn queue(State(svc): State<CallService>) -> Response {
    Json(svc.get_queue()).into_response()
}

async fn config(State(svc): State<CallService>) -> Json<ConfigView> {
    let cfg = svc.config();
    let levels = QueueLevel::ALL
        .iter()
        .map(|&level| LevelInfo {
            level,
            label: level.label().to_owned(),
            rank: level.rank(),
            dispatcher_action: level.dispatcher_action().to_owned(),
            protocol_guidance: level.protocol_guidance().to_owned(),
            sla_hint: cfg.sla_hints.for_level(level).map(str::to_owned),
        })
        .collect();
    Json(ConfigView {
        thresholds: cfg.thresholds,
        distress_weights: cfg.distress_weights,
        content_weights: cfg.content_weights,
        sla_hints: cfg.sla_hints.clone(),
        levels,
    })
}

async fn events(
    State(svc): State<CallService>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = svc.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(ev) => {
                let name = serde_json::to_value(ev.event_type)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                let event = Event::default()
                    .event(name)
                    .json_data(&ev)
                    .expect("queue events serialise");
                Some((Ok(event), rx))
            }
            // A slow client missed some events; tell it to refetch.
            Err(broadcast::error::RecvError::Lagged(n)) => {
                let event = Event::default().event("resync").data(n.to_string());
                Some((Ok(event), rx))
            }
            Err(broadcast::error::RecvError::Closed) => None,
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
