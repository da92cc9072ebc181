//! HTTP/JSON and server-sent-event front end for steering sessions.
//!
//! Mutations on one session are applied one at a time; every committed
//! mutation publishes exactly one full `StateView` on the session's event
//! stream, in version order.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use geodss_core::steering::{Decision, SessionConfig, SessionSnapshot, SteeringSession};
use geodss_core::{Error, ObjectiveWeights, StateView};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};

pub const DEFAULT_PORT: u16 = 8080;
const EVENT_BUFFER: usize = 256;

/// Port from `GEODSS_PORT`, else `DEFAULT_PORT`.
pub fn port_from_env() -> Result<u16, String> {
    match std::env::var("GEODSS_PORT") {
        Ok(v) => v.parse().map_err(|_| format!("GEODSS_PORT is not a port number: {v:?}")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

struct Slot {
    session: Arc<Mutex<SteeringSession>>,
    /// Latest committed view; reads never wait on a mutation in progress.
    view: RwLock<Arc<StateView>>,
    events: broadcast::Sender<Arc<StateView>>,
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<u64, Arc<Slot>>>,
    next_id: AtomicU64,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Persists every session under `dir` as `<id>.json` after each mutation.
    pub fn with_snapshot_dir(dir: impl Into<PathBuf>) -> Self {
        Self { snapshot_dir: Some(dir.into()), ..Self::default() }
    }

    /// Restores the sessions saved under the snapshot directory. Returns how many were loaded.
    pub fn load_snapshots(&self) -> Result<usize, Error> {
        let Some(dir) = &self.snapshot_dir else { return Ok(0) };
        if !dir.exists() {
            return Ok(0);
        }
        let mut loaded = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) else {
                continue;
            };
            let snap: SessionSnapshot = serde_json::from_slice(&std::fs::read(&path)?)?;
            let session = SteeringSession::restore(&snap)?;
            self.insert(id, session)?;
            self.next_id.fetch_max(id + 1, Ordering::SeqCst);
            loaded += 1;
        }
        Ok(loaded)
    }

    fn insert(&self, id: u64, session: SteeringSession) -> Result<(), Error> {
        let view = Arc::new(session.view()?);
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let slot = Slot { session: Arc::new(Mutex::new(session)), view: RwLock::new(view), events };
        self.sessions.write().expect("session table poisoned").insert(id, Arc::new(slot));
        Ok(())
    }

    fn slot(&self, id: u64) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
            .ok_or(ApiError::NotFound(id))
    }

    fn persist(&self, id: u64, session: &SteeringSession) -> Result<(), Error> {
        if let Some(dir) = &self.snapshot_dir {
            write_snapshot(dir, id, session)?;
        }
        Ok(())
    }
}

fn write_snapshot(dir: &FsPath, id: u64, session: &SteeringSession) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{id}.json.tmp"));
    std::fs::write(&tmp, serde_json::to_vec(&session.snapshot())?)?;
    std::fs::rename(tmp, dir.join(format!("{id}.json")))?;
    Ok(())
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(u64),
    Engine(Error),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Engine(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint: Option<&'static str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, constraint, msg) = match &self {
            ApiError::NotFound(id) => (StatusCode::NOT_FOUND, None, format!("no session {id}")),
            ApiError::Engine(e) => match e {
                Error::Constraint { constraint, .. } => (StatusCode::CONFLICT, Some(*constraint), e.to_string()),
                Error::State(_) => (StatusCode::CONFLICT, None, e.to_string()),
                Error::Argument(_) | Error::Domain { .. } => (StatusCode::UNPROCESSABLE_ENTITY, None, e.to_string()),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, None, e.to_string()),
            },
        };
        (status, Json(ErrorBody { error: msg, constraint })).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub version: u64,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/weights", post(post_weights))
        .route("/sessions/{id}/decision", post(post_decision))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Engine(Error::Internal(e.to_string())))?
        .map_err(ApiError::from)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(config): Json<SessionConfig>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let session = blocking(move || SteeringSession::create(config)).await?;
    let id = app.next_id.fetch_add(1, Ordering::SeqCst);
    let version = session.version();
    app.persist(id, &session)?;
    app.insert(id, session)?;
    Ok((StatusCode::CREATED, Json(Created { id, version })))
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<StateView>, ApiError> {
    let slot = app.slot(id)?;
    let view = slot.view.read().expect("view poisoned").clone();
    Ok(Json((*view).clone()))
}

/// Applies `f` under the session's mutation lock, then commits and publishes the new view.
async fn mutate(
    app: Arc<AppState>,
    id: u64,
    f: impl FnOnce(&mut SteeringSession) -> Result<(), Error> + Send + 'static,
) -> Result<Json<StateView>, ApiError> {
    let slot = app.slot(id)?;
    let mut guard = slot.session.clone().lock_owned().await;
    let (guard, view) = blocking(move || {
        f(&mut guard)?;
        let view = Arc::new(guard.view()?);
        Ok((guard, view))
    })
    .await?;
    app.persist(id, &guard)?;
    *slot.view.write().expect("view poisoned") = view.clone();
    // No subscribers is not an error.
    let _ = slot.events.send(view.clone());
    drop(guard);
    Ok(Json((*view).clone()))
}

async fn post_weights(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(weights): Json<ObjectiveWeights>,
) -> Result<Json<StateView>, ApiError> {
    mutate(app, id, move |s| s.set_weights(weights)).await
}

async fn post_decision(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(decision): Json<Decision>,
) -> Result<Json<StateView>, ApiError> {
    mutate(app, id, move |s| s.step(decision).map(|_| ())).await
}

async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = app.slot(id)?;
    let rx = slot.events.subscribe();
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(view) => {
                    let event = Event::default()
                        .event("state")
                        .id(view.version.to_string())
                        .json_data(&*view)
                        .expect("state view serializes");
                    return Some((Ok(event), rx));
                }
                // A slow client missed events; it resynchronizes through /state.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream.boxed()).keep_alive(KeepAlive::default()))
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
