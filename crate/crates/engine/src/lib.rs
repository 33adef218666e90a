//! HTTP front end and loading helpers for the search engine.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use kis_core::corpus::{load_manifest, BankKind, KeyframeLoadError};
use kis_core::filters::FilterFlags;
use kis_core::service::{CompositeQuery, Engine, EngineConfig, KisTask, ServiceError, Session, TaskPrompt, View};
use kis_core::sketch::{read_index_cache, write_index_cache, ColorIndex};

/// Default location of the color index cache next to a manifest.
pub fn default_cache_path(manifest: &Path) -> PathBuf {
    manifest.with_file_name("color_index.kisc")
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<EngineConfig> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn load_tasks(path: &Path) -> anyhow::Result<Vec<KisTask>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing tasks {}", path.display()))
}

pub fn write_cache(idx: &ColorIndex, path: &Path) -> anyhow::Result<()> {
    let out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_index_cache(idx, out).context("writing color index cache")
}

/// Loads the corpus and builds the engine, reusing the color index cache
/// when it matches the corpus and parameters.
pub fn load_engine(manifest: &Path, config: EngineConfig, cache: Option<&Path>) -> anyhow::Result<Engine> {
    let corpus = load_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let cached = cache.filter(|p| p.exists()).and_then(|p| {
        let file = File::open(p).ok()?;
        match read_index_cache(BufReader::new(file), &corpus, &config.color) {
            Ok(idx) => Some(idx),
            Err(e) => {
                eprintln!("ignoring color index cache {}: {e}", p.display());
                None
            }
        }
    });
    let engine = match cached {
        Some(idx) => Engine::with_index(corpus, idx, config)?,
        None => Engine::build(corpus, config)?,
    };
    Ok(engine)
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

type Clock = Arc<dyn Fn() -> f64 + Send + Sync>;

pub struct AppState {
    engine: Arc<Engine>,
    tasks: HashMap<String, KisTask>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    log_dir: Option<PathBuf>,
    clock: Clock,
}

impl AppState {
    pub fn new(engine: Engine, tasks: Vec<KisTask>, log_dir: Option<PathBuf>) -> anyhow::Result<Self> {
        for t in &tasks {
            engine.validate_task(t).map_err(anyhow::Error::msg)?;
        }
        Ok(Self {
            engine: Arc::new(engine),
            tasks: tasks.into_iter().map(|t| (t.id.clone(), t)).collect(),
            sessions: Mutex::new(HashMap::new()),
            log_dir,
            clock: Arc::new(unix_now),
        })
    }

    /// Replaces the wall clock (Unix seconds).
    pub fn with_clock(mut self, clock: impl Fn() -> f64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    modality: Option<kis_core::Modality>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: msg.into(),
                modality: None,
            },
        }
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, msg)
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Expired => StatusCode::GONE,
            ServiceError::TaskEnded | ServiceError::NoTask => StatusCode::CONFLICT,
            ServiceError::UnknownShot(_) => StatusCode::NOT_FOUND,
            ServiceError::Filter(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            body: ErrorBody {
                error: e.to_string(),
                modality: e.modality(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `f` on the session off the async runtime, then persists new log
/// events.
async fn with_session<T: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&Engine, &mut Session, f64) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    let session = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap();
        let at = ((state.clock)() - s.started_at).max(0.0);
        let out = f(&state.engine, &mut s, at);
        if let Some(dir) = &state.log_dir {
            if let Err(e) = s.flush_log(dir) {
                eprintln!("session {}: cannot persist log: {e}", s.id);
            }
        }
        out.map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Default, Deserialize)]
pub struct NewSession {
    #[serde(default)]
    pub task_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskPrompt>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Option<Json<NewSession>>) -> ApiResult<SessionCreated> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let task = match &req.task_id {
        None => None,
        Some(id) => Some(
            state
                .tasks
                .get(id)
                .cloned()
                .ok_or_else(|| ApiError::not_found(format!("unknown task {id:?}")))?,
        ),
    };
    let id = format!("{:016x}", rand::random::<u64>());
    let mut session = Session::new(id.clone(), task.clone());
    session.started_at = (state.clock)();
    state
        .sessions
        .lock()
        .unwrap()
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(SessionCreated {
        session_id: id,
        task: task.map(|t| t.prompt()),
    }))
}

async fn query(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(q): Json<CompositeQuery>,
) -> ApiResult<kis_core::RankedList> {
    with_session(&state, &id, move |e, s, at| e.execute_query(s, q, at))
        .await
        .map(Json)
}

#[derive(Debug, Deserialize)]
struct ViewParam {
    #[serde(default)]
    view: View,
}

async fn results(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(p): Query<ViewParam>,
) -> ApiResult<kis_core::service::BrowsePayload> {
    with_session(&state, &id, move |e, s, at| Ok(e.browse(s, p.view, at)))
        .await
        .map(Json)
}

#[derive(Debug, Deserialize)]
struct ShotBody {
    shot_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Positives {
    pub positives: Vec<String>,
}

async fn positive(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(b): Json<ShotBody>,
) -> ApiResult<Positives> {
    with_session(&state, &id, move |e, s, at| {
        e.mark_positive(s, &b.shot_id, at)?;
        Ok(Positives {
            positives: s.positives.iter().cloned().collect(),
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Default, Deserialize)]
struct FeedbackBody {
    #[serde(default)]
    lambda: Option<f64>,
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<FeedbackBody>>,
) -> ApiResult<kis_core::RankedList> {
    let lambda = body.and_then(|Json(b)| b.lambda);
    with_session(&state, &id, move |e, s, at| e.run_feedback(s, lambda, at))
        .await
        .map(Json)
}

async fn filters(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(flags): Json<FilterFlags>,
) -> ApiResult<kis_core::RankedList> {
    with_session(&state, &id, move |e, s, at| e.set_filters(s, flags, at))
        .await
        .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResult {
    pub verdict: kis_core::service::Verdict,
    pub at: f64,
    /// Present once the task is solved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(b): Json<ShotBody>,
) -> ApiResult<SubmitResult> {
    with_session(&state, &id, move |e, s, at| {
        let verdict = e.submit(s, &b.shot_id, at)?;
        let at = s.log.last().map_or(at, |ev| ev.at);
        Ok(SubmitResult {
            verdict,
            at,
            score: s.solved_at().map(|_| e.score_session(s)),
        })
    })
    .await
    .map(Json)
}

async fn session_log(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Vec<kis_core::service::LogEvent>> {
    let session = state.session(&id)?;
    let log = session.lock().unwrap().log.clone();
    Ok(Json(log))
}

#[derive(Debug, Deserialize)]
struct ConceptParams {
    #[serde(default)]
    prefix: String,
    #[serde(default)]
    bank: Option<BankKind>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn concepts(
    State(state): State<Arc<AppState>>,
    Query(p): Query<ConceptParams>,
) -> ApiResult<Vec<kis_core::service::ConceptSuggestion>> {
    let limit = p.limit.unwrap_or(state.engine.config().concept_limit);
    Ok(Json(state.engine.concepts(&p.prefix, p.bank, limit)))
}

#[derive(Debug, Deserialize)]
struct RecommendParams {
    x: f64,
    y: f64,
    #[serde(default)]
    n: Option<usize>,
}

async fn recommend(
    State(state): State<Arc<AppState>>,
    Query(p): Query<RecommendParams>,
) -> ApiResult<Vec<kis_core::sketch::Recommendation>> {
    if !((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "x and y must lie in [0, 1]"));
    }
    Ok(Json(state.engine.recommend(p.x, p.y, p.n)))
}

async fn keyframe(State(state): State<Arc<AppState>>, UrlPath(shot_id): UrlPath<String>) -> Result<Response, ApiError> {
    match state.engine.corpus().keyframe_bytes(&shot_id) {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, "image/x-portable-pixmap")], bytes).into_response()),
        Err(KeyframeLoadError::UnknownShot(_)) => Err(ApiError::not_found(format!("unknown shot {shot_id:?}"))),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn task(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<TaskPrompt> {
    state
        .tasks
        .get(&id)
        .map(|t| Json(t.prompt()))
        .ok_or_else(|| ApiError::not_found(format!("unknown task {id:?}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/query", post(query))
        .route("/session/{id}/results", get(results))
        .route("/session/{id}/positive", post(positive))
        .route("/session/{id}/feedback", post(feedback))
        .route("/session/{id}/filters", post(filters))
        .route("/session/{id}/submit", post(submit))
        .route("/session/{id}/log", get(session_log))
        .route("/concepts", get(concepts))
        .route("/recommend", get(recommend))
        .route("/keyframe/{shot_id}", get(keyframe))
        .route("/task/{id}", get(task))
        .with_state(state)
}
