//! HTTP session service for the operator loop.
//!
//! Each session wraps one [`Mission`]. Mutations (failure injection, commit,
//! finish) serialize on the session lock; previews clone the mission and run
//! without holding it.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use rescov::reliability::FailureEvent;
use rescov::scenario::{
    LogEntry, Mission, MissionSnapshot, Recovery, ScenarioConfig, ScenarioError,
};
use rescov::{detection_map, RobotId};

const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Running,
    AwaitingOperator,
    Finished,
}

fn lifecycle(m: &Mission) -> Lifecycle {
    if m.is_finished() {
        Lifecycle::Finished
    } else if m.pending_failure().is_some() {
        Lifecycle::AwaitingOperator
    } else {
        Lifecycle::Running
    }
}

struct Session {
    mission: Mutex<Mission>,
    events: broadcast::Sender<LogEntry>,
}

impl Session {
    /// Runs `op` under the lock and publishes whatever it appended to the log.
    fn mutate<T>(
        &self,
        op: impl FnOnce(&mut Mission) -> Result<T, ScenarioError>,
    ) -> Result<T, ApiError> {
        let mut m = self.mission.lock().expect("session lock poisoned");
        let seen = m.log().len();
        let out = op(&mut m);
        for entry in &m.log().entries()[seen..] {
            let _ = self.events.send(entry.clone());
        }
        out.map_err(ApiError::from)
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    default_config: ScenarioConfig,
    sessions: RwLock<HashMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    /// `default_config` is used when `POST /sessions` has an empty body.
    pub fn new(default_config: ScenarioConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                default_config,
                sessions: RwLock::new(HashMap::new()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    fn session(&self, id: u64) -> Result<Arc<Session>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("registry lock poisoned")
            .get(&id)
            .cloned()
            .ok_or(ApiError::NotFound(id))
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(u64),
    BadRequest(String),
    Scenario(ScenarioError),
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        ApiError::Scenario(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match &self {
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                "NotFound",
                format!("no session {id}"),
            ),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m.clone()),
            ApiError::Scenario(e) => {
                let (status, code) = match e {
                    ScenarioError::NoPendingFailure => (StatusCode::CONFLICT, "NoPendingFailure"),
                    ScenarioError::FailurePending
                    | ScenarioError::Finished
                    | ScenarioError::NoFailurePossible => (StatusCode::CONFLICT, "Conflict"),
                    ScenarioError::NotActive(_) => (StatusCode::CONFLICT, "NotActive"),
                    ScenarioError::SelectionInfeasible(_) => {
                        (StatusCode::UNPROCESSABLE_ENTITY, "Infeasible")
                    }
                    ScenarioError::InvalidConfig(_)
                    | ScenarioError::InvalidTime { .. }
                    | ScenarioError::Coordination(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
                    _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
                };
                (status, code, e.to_string())
            }
        };
        (
            status,
            Json(ErrorBody {
                error: code.to_string(),
                message,
            }),
        )
            .into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: u64,
    pub lifecycle: Lifecycle,
    #[serde(flatten)]
    pub snapshot: MissionSnapshot,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct FailureRequest {
    pub robot_id: Option<RobotId>,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Choice {
    #[serde(rename = "L")]
    pub l: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub ratio_after_local: f64,
    pub robots_requested_count: usize,
    /// Change in per-cell detection probability, row-major.
    pub coverage_map_delta: Vec<f64>,
    pub estimated_eval_count: usize,
    pub ratio_final: f64,
    pub satisfied: bool,
    pub inside: Vec<RobotId>,
    pub coverage_after: f64,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/failure", post(inject_failure))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/finish", post(finish))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(
    body: &Bytes,
) -> Result<Option<T>, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    serde_json::from_slice(body)
        .map(Some)
        .map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let config = if body.iter().all(u8::is_ascii_whitespace) {
        state.inner.default_config.clone()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let mission = tokio::task::spawn_blocking(move || Mission::start(config))
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    let (tx, _) = broadcast::channel(EVENT_BUFFER);
    let id = state.inner.next_id.fetch_add(1, Ordering::Relaxed);
    let session = Arc::new(Session {
        mission: Mutex::new(mission),
        events: tx,
    });
    state
        .inner
        .sessions
        .write()
        .expect("registry lock poisoned")
        .insert(id, session);
    tracing::info!(session = id, "session created");
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

async fn get_state(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Json<SessionState>, ApiError> {
    let session = state.session(id)?;
    let m = session.mission.lock().expect("session lock poisoned");
    Ok(Json(SessionState {
        session_id: id,
        lifecycle: lifecycle(&m),
        snapshot: m.snapshot()?,
    }))
}

async fn inject_failure(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    body: Bytes,
) -> Result<Json<FailureEvent>, ApiError> {
    let session = state.session(id)?;
    let req: FailureRequest = parse_body(&body)?.unwrap_or_default();
    Ok(Json(
        session.mutate(|m| m.inject_failure(req.robot_id, req.time))?,
    ))
}

fn preview_of(m: &Mission, choice: Choice) -> Result<Preview, ApiError> {
    let rec: Recovery = m.plan(&m.config().coordination_params(choice.l, choice.gamma))?;
    let before = m.heatmap()?;
    let after = detection_map(&rec.placement, m.roster(), m.grid()).map_err(ScenarioError::from)?;
    Ok(Preview {
        ratio_after_local: rec.result.ratio_achieved,
        robots_requested_count: rec.result.requested_robots.cardinality(),
        coverage_map_delta: after.iter().zip(&before).map(|(a, b)| a - b).collect(),
        estimated_eval_count: rec.result.evaluations,
        ratio_final: rec.result.final_ratio(),
        satisfied: rec.result.satisfied,
        inside: rec.result.inside.clone(),
        coverage_after: rec.coverage_after,
    })
}

async fn preview(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Query(choice): Query<Choice>,
) -> Result<Json<Preview>, ApiError> {
    let session = state.session(id)?;
    let clone = session
        .mission
        .lock()
        .expect("session lock poisoned")
        .clone();
    let out = tokio::task::spawn_blocking(move || preview_of(&clone, choice))
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    Ok(Json(out))
}

async fn commit(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Json(choice): Json<Choice>,
) -> Result<Json<Recovery>, ApiError> {
    let session = state.session(id)?;
    let out = tokio::task::spawn_blocking(move || {
        session.mutate(|m| {
            let params = m.config().coordination_params(choice.l, choice.gamma);
            m.commit(&params)
        })
    })
    .await
    .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    Ok(Json(out))
}

async fn finish(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Json<SessionState>, ApiError> {
    let session = state.session(id)?;
    session.mutate(|m| m.finish())?;
    let m = session.mission.lock().expect("session lock poisoned");
    Ok(Json(SessionState {
        session_id: id,
        lifecycle: lifecycle(&m),
        snapshot: m.snapshot()?,
    }))
}

fn sse_event(entry: &LogEntry) -> Result<SseEvent, Infallible> {
    let data = serde_json::to_string(entry).expect("log entries serialize");
    Ok(SseEvent::default()
        .event(entry.event.name())
        .id(entry.seq.to_string())
        .data(data))
}

/// Past log entries first, then live ones. Subscribing under the session
/// lock means nothing is missed or repeated.
fn event_stream(
    session: &Session,
) -> impl Stream<Item = Result<SseEvent, Infallible>> + Send + 'static {
    let (past, rx) = {
        let m = session.mission.lock().expect("session lock poisoned");
        (m.log().entries().to_vec(), session.events.subscribe())
    };
    let live = stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(entry) => Some((entry, rx)),
            Err(broadcast::error::RecvError::Lagged(n)) => {
                tracing::warn!(skipped = n, "event subscriber lagged; closing stream");
                None
            }
            Err(broadcast::error::RecvError::Closed) => None,
        }
    });
    stream::iter(past).chain(live).map(|e| sse_event(&e))
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let session = state.session(id)?;
    Ok(Sse::new(event_stream(&session)).keep_alive(KeepAlive::default()))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ScenarioConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(AppState::new(config))).await
}
