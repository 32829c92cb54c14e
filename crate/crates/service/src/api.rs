use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use followup_core::config::Config;
use followup_core::filters::{tensor_key, FilterKind, TransitionTensor};
use followup_core::harness::Harness;
use serde::de::DeserializeOwned;

use crate::error::ServiceError;
use crate::session::{
    CommitAck, CreateRequest, DecisionInput, ObservationInput, Session, SessionSummary,
    SessionView, StepResponse,
};
use crate::store::Store;

type Shared = Arc<Mutex<Session>>;

/// Sessions, their persistence and the tensors shared between them.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: Config,
    store: Store,
    sessions: RwLock<HashMap<String, Shared>>,
    tensors: Mutex<HashMap<String, Arc<TransitionTensor>>>,
}

impl AppState {
    /// Service using `config` for new sessions; sessions found under
    /// `data_dir` are replayed from their logs.
    pub fn new(config: Config, data_dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        config
            .validate()
            .map_err(followup_core::HarnessError::from)?;
        let state = Self {
            inner: Arc::new(Inner {
                config,
                store: Store::new(data_dir)?,
                sessions: RwLock::new(HashMap::new()),
                tensors: Mutex::new(HashMap::new()),
            }),
        };
        for stored in state.inner.store.load_all()? {
            let h = stored.header;
            let harness = state.harness(&h.config)?;
            let session =
                Session::replay(h.id.clone(), h.patient, h.config, &harness, &stored.events)?;
            state
                .inner
                .sessions
                .write()
                .expect("session map")
                .insert(h.id, Arc::new(Mutex::new(session)));
        }
        Ok(state)
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    /// Harness for `config`, reusing a tensor already built for the same
    /// model and grid.
    fn harness(&self, config: &Config) -> Result<Harness, ServiceError> {
        let mut harness = Harness::from_config(config)?;
        if config.filter.kind == FilterKind::Conditional {
            let key = tensor_key(harness.model(), &config.filter.grid);
            let mut tensors = self.inner.tensors.lock().expect("tensor cache");
            let tensor = match tensors.get(&key) {
                Some(t) => Arc::clone(t),
                None => {
                    let t = harness.tensor()?;
                    tensors.insert(key, Arc::clone(&t));
                    t
                }
            };
            harness = harness.with_tensor(tensor);
        }
        Ok(harness)
    }

    fn lookup(&self, id: &str) -> Result<Shared, ServiceError> {
        self.inner
            .sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn create(&self, request: CreateRequest) -> Result<StepResponse, ServiceError> {
        let config = match request.config {
            Some(c) => {
                c.validate().map_err(followup_core::HarnessError::from)?;
                c
            }
            None => self.inner.config.clone(),
        };
        let harness = self.harness(&config)?;
        let id = uuid::Uuid::new_v4().to_string();
        let (session, response) = Session::create(id.clone(), request.patient, config, &harness)?;
        self.inner.store.write(&session)?;
        self.inner
            .sessions
            .write()
            .expect("session map")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(response)
    }

    /// Applies `op` to a copy of the session and keeps it only once the new
    /// event is persisted.
    fn mutate<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Session) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let shared = self.lookup(id)?;
        let mut guard = shared.lock().expect("session lock");
        let mut next = guard.clone();
        let out = op(&mut next)?;
        if let Some(event) = next.log().get(guard.log().len()) {
            self.inner.store.append(id, event)?;
        }
        *guard = next;
        Ok(out)
    }

    pub fn observe(&self, id: &str, input: ObservationInput) -> Result<StepResponse, ServiceError> {
        self.mutate(id, |s| s.observe(input))
    }

    pub fn commit(&self, id: &str, input: DecisionInput) -> Result<CommitAck, ServiceError> {
        self.mutate(id, |s| s.commit(input.decision))
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.lookup(id)?.lock().expect("session lock").view())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let sessions: Vec<Shared> = self
            .inner
            .sessions
            .read()
            .expect("session map")
            .values()
            .cloned()
            .collect();
        let mut out: Vec<SessionSummary> = sessions
            .iter()
            .map(|s| s.lock().expect("session lock").summary())
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}

/// Parses a JSON body; an empty body reads as `{}`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    let text: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(text)
        .map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| std::panic::resume_unwind(e.into_panic()))
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<StepResponse>), ServiceError> {
    let request: CreateRequest = parse(&body)?;
    let response = blocking(move || state.create(request)).await?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn post_observation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StepResponse>, ServiceError> {
    let input: ObservationInput = parse(&body)?;
    Ok(Json(blocking(move || state.observe(&id, input)).await?))
}

async fn post_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<CommitAck>, ServiceError> {
    let input: DecisionInput = parse(&body)?;
    Ok(Json(blocking(move || state.commit(&id, input)).await?))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(state.list())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(state.view(&id)?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/observations", post(post_observation))
        .route("/sessions/{id}/decisions", post(post_decision))
        .with_state(state)
}

/// Serves the API on `listener` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
