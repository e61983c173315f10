//! HTTP routes. Bodies are flat JSON objects; errors are `{code, message}`.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{lower, upper, noise_scale, acquisition?, engine?, seed?}` | session view |
//! | GET | `/sessions/{id}` | | session view |
//! | POST | `/sessions/{id}/anchors` | `{points}` | `{n, bandwidth}` |
//! | POST | `/sessions/{id}/freeze` | | session view |
//! | GET | `/sessions/{id}/duel` | | pending proposal |
//! | POST | `/sessions/{id}/preference` | `{winner: "challenger" \| "reference"}` | incumbent and both endpoints |
//! | GET | `/sessions/{id}/summary` | `?grid=N` (default 50) | grid table, incumbent, pending pair |
//! | GET | `/sessions/{id}/trace` | | CSV in the harness trace layout |
//! | POST | `/sessions/{id}/close` | | session view |

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard, RwLock};

use super::session::{CreateRequest, Event, Session, SessionError, WinnerTag};
use super::store::EventStore;
use hetpbo_core::Point;

#[derive(Clone)]
pub struct AppState {
    store: EventStore,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    /// Opens the store and replays every session found in it.
    pub fn open(store: EventStore) -> crate::Result<Self> {
        let mut sessions = HashMap::new();
        for id in store.ids()? {
            let events = store.load(&id)?;
            match Session::replay(&events) {
                Ok(s) => {
                    sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Err(e) => tracing::error!(session = id, error = %e, "skipping unreadable session"),
            }
        }
        Ok(Self { store, sessions: Arc::new(RwLock::new(sessions)) })
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offenders: Option<Vec<usize>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), offenders: None } }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::BadRequest(_) => Self::new(StatusCode::BAD_REQUEST, "bad_request", msg),
            SessionError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", msg),
            SessionError::Gone => Self::new(StatusCode::GONE, "gone", msg),
            SessionError::OutOfDomain(idx) => {
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "out_of_domain", msg);
                err.body.offenders = Some(idx);
                err
            }
            SessionError::Engine(_) | SessionError::Corrupt(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_error", msg)
            }
        }
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn session(state: &AppState, id: &str) -> ApiResult<OwnedMutexGuard<Session>> {
    let arc = state.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::not_found(id))?;
    Ok(arc.lock_owned().await)
}

/// Runs `f` on a blocking thread with the session locked. The event it
/// returns is persisted and then applied, both before the response.
async fn mutate<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&Session) -> Result<Option<Event>, SessionError> + Send + 'static,
    respond: impl FnOnce(&Session) -> Result<T, SessionError> + Send + 'static,
) -> ApiResult<T> {
    let mut guard = session(state, id).await?;
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || -> ApiResult<T> {
        if let Some(event) = f(&guard)? {
            store.append(&guard.id, &event)?;
            guard.apply(&event)?;
        }
        Ok(respond(&guard)?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn read<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&Session) -> Result<T, ApiError> + Send + 'static,
) -> ApiResult<T> {
    let guard = session(state, id).await?;
    tokio::task::spawn_blocking(move || f(&guard))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create(State(state): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<impl IntoResponse> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let event = req.into_event(id.clone())?;
    let session = Session::from_created(&event)?;
    let store = state.store.clone();
    let sid = id.clone();
    tokio::task::spawn_blocking(move || store.append(&sid, &event))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let view = session.view();
    state.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(read(&state, &id, |s| Ok(s.view())).await?))
}

#[derive(Deserialize)]
struct AnchorsBody {
    points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
pub struct AnchorsReply {
    pub n: usize,
    pub bandwidth: f64,
}

async fn add_anchors(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<AnchorsBody>,
) -> ApiResult<impl IntoResponse> {
    let reply = mutate(
        &state,
        &id,
        move |s| s.add_anchors(body.points),
        |s| Ok(AnchorsReply { n: s.anchors().len(), bandwidth: s.bandwidth() }),
    )
    .await?;
    Ok(Json(reply))
}

async fn freeze(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(mutate(&state, &id, |s| s.freeze().map(Some), |s| Ok(s.view())).await?))
}

async fn next_duel(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let p = mutate(&state, &id, |s| s.next_duel().map(Some), |s| Ok(s.pending.clone().expect("just proposed"))).await?;
    Ok(Json(p))
}

#[derive(Deserialize)]
struct PreferenceBody {
    winner: String,
}

async fn preference(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<PreferenceBody>,
) -> ApiResult<impl IntoResponse> {
    let tag = match body.winner.as_str() {
        "challenger" => WinnerTag::Challenger,
        "reference" => WinnerTag::Reference,
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                format!("winner must be \"challenger\" or \"reference\", got {other:?}"),
            ))
        }
    };
    Ok(Json(mutate(&state, &id, move |s| s.answer(tag).map(Some), |s| s.preference_summary()).await?))
}

#[derive(Deserialize)]
struct GridQuery {
    grid: Option<usize>,
}

async fn summary(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<GridQuery>,
) -> ApiResult<impl IntoResponse> {
    let grid = q.grid.unwrap_or(50);
    Ok(Json(read(&state, &id, move |s| Ok(s.posterior_summary(grid)?)).await?))
}

async fn trace(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let csv = read(&state, &id, |s| Ok(s.trace_csv()?)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv))
}

async fn close(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(mutate(&state, &id, |s| s.close().map(Some), |s| Ok(s.view())).await?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/anchors", post(add_anchors))
        .route("/sessions/{id}/freeze", post(freeze))
        .route("/sessions/{id}/duel", get(next_duel))
        .route("/sessions/{id}/preference", post(preference))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/close", post(close))
        .with_state(state)
}
