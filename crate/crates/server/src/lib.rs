//! HTTP front for interactive sessions.
//!
//! Each session is held behind its own mutex so commands on one session are
//! serialized while different sessions proceed independently. When a data
//! directory is configured every event is appended to
//! `<dir>/<id>.events.jsonl` before the response goes out, and sessions are
//! rebuilt from those files on startup.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use overhang_core::model::{Action, Legality};
use overhang_core::session::{
    Clock, CommitOutcome, Condition, EventLog, Session, SessionSummary, SessionView, SystemClock,
};
use overhang_core::Error;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

const EVENTS_SUFFIX: &str = ".events.jsonl";
const TRACES_SUFFIX: &str = ".traces.jsonl";

pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    data_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    next_id: AtomicU64,
}

impl SessionManager {
    pub fn new(data_dir: Option<PathBuf>, clock: Arc<dyn Clock>) -> Self {
        SessionManager {
            sessions: RwLock::new(HashMap::new()),
            data_dir,
            clock,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(None, Arc::new(SystemClock))
    }

    /// Opens `dir`, replaying every event log found there.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>) -> overhang_core::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let manager = Self::new(Some(dir.to_path_buf()), clock);
        let mut max_id = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(id) = name.strip_suffix(EVENTS_SUFFIX) else {
                continue;
            };
            let mut session = Session::replay(&EventLog::read(&path)?)?;
            if session.id() != id {
                return Err(Error::EventLog(format!("{name} holds session {}", session.id())));
            }
            session.attach_log(EventLog::open_append(&path)?);
            if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            manager
                .sessions
                .write()
                .insert(id.to_string(), Arc::new(Mutex::new(session)));
        }
        manager.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(manager)
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, condition: Condition, seed: u64) -> overhang_core::Result<(String, SessionView)> {
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let log = match &self.data_dir {
            Some(dir) => Some(EventLog::create(&dir.join(format!("{id}{EVENTS_SUFFIX}")))?),
            None => None,
        };
        let now = self.now();
        let session = Session::create(id.clone(), condition, seed, now, log)?;
        let view = session.view(now);
        self.sessions
            .write()
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok((id, view))
    }

    pub fn get(&self, id: &str) -> overhang_core::Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    pub fn state(&self, id: &str) -> overhang_core::Result<SessionView> {
        let session = self.get(id)?;
        let mut s = session.lock();
        let now = self.now();
        s.tick(now)?;
        Ok(s.view(now))
    }

    pub fn preview(&self, id: &str, action: Action, dwell_ms: f64) -> overhang_core::Result<Legality> {
        let session = self.get(id)?;
        let mut s = session.lock();
        s.preview(action, dwell_ms, self.now())
    }

    pub fn place(&self, id: &str, action: Action, client_ts: Option<f64>) -> overhang_core::Result<PlaceResponse> {
        let session = self.get(id)?;
        let mut s = session.lock();
        let now = self.now();
        let r = s.place(action, client_ts, now)?;
        Ok(PlaceResponse {
            outcome: r.outcome,
            verdict: r.verdict,
            trial: r.trial,
            trial_reward: r.trial_reward,
            state: s.view(now),
        })
    }

    pub fn finalize(&self, id: &str) -> overhang_core::Result<FinalizeResponse> {
        let session = self.get(id)?;
        let mut s = session.lock();
        let summary = s.finalize(self.now())?;
        let traces_path = match &self.data_dir {
            Some(dir) => {
                let path = dir.join(format!("{id}{TRACES_SUFFIX}"));
                s.export_traces(&path)?;
                Some(path.display().to_string())
            }
            None => None,
        };
        Ok(FinalizeResponse {
            summary,
            traces_path,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateRequest {
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub state: SessionView,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub x: f64,
    pub layer: i32,
    #[serde(default)]
    pub dwell_ms: f64,
}

/// The only thing a preview ever returns.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewResponse {
    pub verdict: Legality,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaceRequest {
    pub x: f64,
    pub layer: i32,
    #[serde(default)]
    pub client_ts: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaceResponse {
    pub outcome: CommitOutcome,
    pub verdict: Legality,
    pub trial: usize,
    pub trial_reward: Option<f64>,
    pub state: SessionView,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub summary: SessionSummary,
    pub traces_path: Option<String>,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::SessionNotFound(_) => StatusCode::NOT_FOUND,
            Error::SessionClosed(_) => StatusCode::CONFLICT,
            Error::Io(_) | Error::Json(_) | Error::EventLog(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type Shared = State<Arc<SessionManager>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn create(State(m): Shared, Json(req): Json<CreateRequest>) -> ApiResult<CreateResponse> {
    let (id, state) = m.create(req.condition, req.seed)?;
    tracing::info!(%id, condition = %req.condition, seed = req.seed, "session created");
    Ok(Json(CreateResponse { id, state }))
}

async fn state(State(m): Shared, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    Ok(Json(m.state(&id)?))
}

async fn preview(
    State(m): Shared,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PreviewRequest>,
) -> ApiResult<PreviewResponse> {
    let verdict = m.preview(&id, Action::new(req.x, req.layer), req.dwell_ms)?;
    Ok(Json(PreviewResponse { verdict }))
}

async fn place(
    State(m): Shared,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PlaceRequest>,
) -> ApiResult<PlaceResponse> {
    Ok(Json(m.place(&id, Action::new(req.x, req.layer), req.client_ts)?))
}

async fn finalize(State(m): Shared, UrlPath(id): UrlPath<String>) -> ApiResult<FinalizeResponse> {
    Ok(Json(m.finalize(&id)?))
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/preview", post(preview))
        .route("/sessions/{id}/place", post(place))
        .route("/sessions/{id}/finalize", post(finalize))
        .with_state(manager)
}

pub async fn serve(addr: SocketAddr, manager: Arc<SessionManager>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(manager)).await
}
