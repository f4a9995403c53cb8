//! JSON service over stored logs and one shared device session.
//!
//! Analysis endpoints are pure functions of a stored log plus query
//! thresholds. Device endpoints run on the blocking pool and queue behind a
//! single [`SharedLink`].

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use friends_core::link::list_ports;
use friends_core::pipeline::episode_range;
use friends_core::plot::DayPlot;
use friends_core::{
    analyze, decode_stream, Analysis, DecodedEvent, DeviceInstant, DeviceLink, Episode, EpisodeKind, FilterConfig,
    LinkConfig, LinkError, LinkState, PTMetrics, PortAddress, PortDescriptor, SharedLink, TemperatureReading,
    ZoneConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// A decoded log available for querying.
#[derive(Debug, Clone)]
pub struct StoredSession {
    pub id: String,
    pub source: String,
    pub events: Vec<DecodedEvent>,
    pub rejected_lines: usize,
}

impl StoredSession {
    pub fn from_lines<S: AsRef<str>>(id: &str, source: &str, lines: impl IntoIterator<Item = S>) -> Self {
        let stream = decode_stream(lines);
        StoredSession {
            id: id.into(),
            source: source.into(),
            events: stream.events,
            rejected_lines: stream.rejects.len(),
        }
    }
}

pub struct AppState {
    pub zone: ZoneConfig,
    pub defaults: FilterConfig,
    pub data_dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<StoredSession>>>,
    link: SharedLink,
    /// Used when a device call arrives while disconnected.
    port: Mutex<Option<PortAddress>>,
}

impl AppState {
    pub fn new(zone: ZoneConfig, defaults: FilterConfig, link_config: LinkConfig) -> Self {
        AppState {
            zone,
            defaults,
            data_dir: None,
            sessions: RwLock::default(),
            link: SharedLink::new(DeviceLink::new(link_config)),
            port: Mutex::new(None),
        }
    }

    pub fn with_default_port(self, port: Option<PortAddress>) -> Self {
        *self.port.lock().unwrap() = port;
        self
    }

    /// Loads every `*.txt`, `*.raw` and `*.log` file in `dir` as a session
    /// named after the file stem, and saves future pulls there.
    pub fn with_data_dir(mut self, dir: &Path) -> anyhow::Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "raw" | "log")))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            self.insert(StoredSession::from_lines(&id, &p.display().to_string(), text.lines()));
        }
        self.data_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn insert(&self, session: StoredSession) {
        self.sessions.write().unwrap().insert(session.id.clone(), Arc::new(session));
    }

    fn session(&self, id: &str) -> Result<Arc<StoredSession>, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no session {id:?}")))
    }

    fn fresh_pull_id(&self) -> String {
        let sessions = self.sessions.read().unwrap();
        (1..).map(|n| format!("pull-{n}")).find(|id| !sessions.contains_key(id)).expect("unbounded")
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ports", get(ports))
        .route("/device", get(device_status))
        .route("/device/connect", post(device_connect))
        .route("/device/disconnect", post(device_disconnect))
        .route("/device/time", get(device_time))
        .route("/device/set-time", post(device_set_time))
        .route("/device/erase", post(device_erase))
        .route("/device/start", post(device_start))
        .route("/device/pull", post(device_pull))
        .route("/sessions", get(list_sessions))
        .route("/sessions/:id/episodes", get(episodes))
        .route("/sessions/:id/metrics", get(metrics))
        .route("/sessions/:id/timeline", get(timeline))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Entry point for `friends serve`.
pub fn serve_blocking(
    listen: &str,
    data_dir: Option<PathBuf>,
    port: Option<PortAddress>,
    defaults: FilterConfig,
    zone: ZoneConfig,
) -> anyhow::Result<()> {
    defaults.validate().map_err(crate::exit::UsageError)?;
    let mut state = AppState::new(zone, defaults, LinkConfig::default()).with_default_port(port);
    if let Some(dir) = data_dir {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        state = state.with_data_dir(&dir)?;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
        let addr: SocketAddr = listener.local_addr()?;
        println!("serving on http://{addr}");
        serve(listener, Arc::new(state)).await?;
        Ok(())
    })
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Device(LinkError),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, name, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "NotFound", m),
            ApiError::Device(e) => {
                let status =
                    if e == LinkError::Timeout { StatusCode::GATEWAY_TIMEOUT } else { StatusCode::BAD_GATEWAY };
                (status, e.name(), e.to_string())
            }
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal", m),
        };
        (status, Json(json!({ "error": name, "message": message }))).into_response()
    }
}

impl From<LinkError> for ApiError {
    fn from(e: LinkError) -> Self {
        ApiError::Device(e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn ports() -> ApiResult<Vec<PortDescriptor>> {
    tokio::task::spawn_blocking(list_ports).await.map(Json).map_err(|e| ApiError::Internal(e.to_string()))
}

// ---- device ----

#[derive(Debug, Serialize)]
pub struct DeviceStatus {
    pub state: LinkState,
    pub port: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ConnectBody {
    pub port: Option<String>,
}

/// Clock target in Unix seconds; host time when absent.
#[derive(Debug, Default, Deserialize)]
pub struct TimeBody {
    pub posix_seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct DeviceTime {
    pub time: DeviceInstant,
    pub formatted: String,
    /// Device minus host, seconds.
    pub offset_from_host_s: f64,
}

fn body<T: Default>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    match b {
        Ok(Json(v)) => Ok(v),
        Err(JsonRejection::MissingJsonContentType(_)) => Ok(T::default()),
        Err(e) => Err(ApiError::BadRequest(e.body_text())),
    }
}

fn parse_port(name: &str) -> Result<PortAddress, ApiError> {
    name.parse().map_err(ApiError::BadRequest)
}

/// Runs `op` on the shared link, connecting first to `port` or the
/// remembered port when needed. Callers queue behind each other.
async fn with_device<R, F>(state: &Arc<AppState>, port: Option<PortAddress>, op: F) -> Result<R, ApiError>
where
    R: Send + 'static,
    F: FnOnce(&mut DeviceLink) -> Result<R, LinkError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut link = state.link.lock();
        if let Some(p) = &port {
            *state.port.lock().unwrap() = Some(p.clone());
        }
        let wanted = port.or_else(|| state.port.lock().unwrap().clone());
        if link.state() == LinkState::Disconnected {
            let target = wanted.ok_or(LinkError::NotConnected)?;
            link.connect(&target)?;
        }
        op(&mut link).map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn status_of(state: &AppState) -> DeviceStatus {
    let port = state.port.lock().unwrap().as_ref().map(|p| p.to_string());
    DeviceStatus { state: state.link.state(), port }
}

async fn device_status(State(state): State<Arc<AppState>>) -> Json<DeviceStatus> {
    Json(status_of(&state))
}

async fn device_connect(
    State(state): State<Arc<AppState>>,
    b: Result<Json<ConnectBody>, JsonRejection>,
) -> ApiResult<DeviceStatus> {
    let port = body(b)?.port.as_deref().map(parse_port).transpose()?;
    with_device(&state, port, |_| Ok(())).await?;
    Ok(Json(status_of(&state)))
}

async fn device_disconnect(State(state): State<Arc<AppState>>) -> ApiResult<DeviceStatus> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || s.link.lock().disconnect())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(status_of(&state)))
}

fn device_time_view(time: DeviceInstant, zone: &ZoneConfig) -> DeviceTime {
    DeviceTime {
        time,
        formatted: zone.format_instant(time),
        offset_from_host_s: time.ticks_since(DeviceInstant::now()) as f64 / 65_536.0,
    }
}

async fn device_time(State(state): State<Arc<AppState>>) -> ApiResult<DeviceTime> {
    let t = with_device(&state, None, |l| l.read_time()).await?;
    Ok(Json(device_time_view(t, &state.zone)))
}

fn target_time(b: TimeBody) -> Result<DeviceInstant, ApiError> {
    match b.posix_seconds {
        None => Ok(DeviceInstant::now()),
        Some(s) if s.is_finite() && (0.0..4_294_967_296.0).contains(&s) => Ok(DeviceInstant::from_unix_seconds(s)),
        Some(s) => Err(ApiError::BadRequest(format!("posix_seconds {s} is outside the device clock range"))),
    }
}

async fn device_set_time(
    State(state): State<Arc<AppState>>,
    b: Result<Json<TimeBody>, JsonRejection>,
) -> ApiResult<DeviceTime> {
    let t = target_time(body(b)?)?;
    with_device(&state, None, move |l| l.set_time(t)).await?;
    Ok(Json(device_time_view(t, &state.zone)))
}

async fn device_erase(State(state): State<Arc<AppState>>) -> ApiResult<serde_json::Value> {
    with_device(&state, None, |l| l.erase_flash()).await?;
    Ok(Json(json!({ "erased": true })))
}

async fn device_start(
    State(state): State<Arc<AppState>>,
    b: Result<Json<TimeBody>, JsonRejection>,
) -> ApiResult<DeviceTime> {
    let t = target_time(body(b)?)?;
    with_device(&state, None, move |l| l.start_collection(t)).await?;
    Ok(Json(device_time_view(t, &state.zone)))
}

async fn device_pull(
    State(state): State<Arc<AppState>>,
    b: Result<Json<ConnectBody>, JsonRejection>,
) -> ApiResult<SessionSummary> {
    let port = body(b)?.port.as_deref().map(parse_port).transpose()?;
    let lines = with_device(&state, port, |l| l.read_all()).await?;
    let id = state.fresh_pull_id();
    let mut source = "device".to_string();
    if let Some(dir) = &state.data_dir {
        let path = dir.join(format!("{id}.txt"));
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        fs::write(&path, text).map_err(|e| ApiError::Internal(format!("writing {}: {e}", path.display())))?;
        source = path.display().to_string();
    }
    let session = StoredSession::from_lines(&id, &source, &lines);
    let summary = summarize(&session, &state);
    state.insert(session);
    Ok(Json(summary))
}

// ---- sessions ----

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub source: String,
    pub record_count: usize,
    pub rejected_lines: usize,
    pub raw_puff_count: usize,
    pub dates: Vec<NaiveDate>,
}

fn summarize(s: &StoredSession, state: &AppState) -> SessionSummary {
    let a = analyze(&s.events, &state.defaults, state.zone);
    SessionSummary {
        id: s.id.clone(),
        source: s.source.clone(),
        record_count: s.events.len(),
        rejected_lines: s.rejected_lines,
        raw_puff_count: a.raw_puff_count,
        dates: a.dates(),
    }
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let all: Vec<Arc<StoredSession>> = state.sessions.read().unwrap().values().cloned().collect();
    Json(all.iter().map(|s| summarize(s, &state)).collect())
}

/// Per-request overrides of the service's filter defaults.
#[derive(Debug, Default, Deserialize)]
pub struct AnalysisQuery {
    pub min_puff_s: Option<f64>,
    pub use_thermistor: Option<bool>,
    pub min_puff_ms: Option<f64>,
    pub temp_delta: Option<u16>,
    /// Comma-separated episode kinds, e.g. `PUFF,TOUCH`.
    pub kinds: Option<String>,
    pub date: Option<NaiveDate>,
}

impl AnalysisQuery {
    fn filter(&self, defaults: &FilterConfig) -> Result<FilterConfig, ApiError> {
        let f = FilterConfig {
            use_thermistor: self.use_thermistor.unwrap_or(defaults.use_thermistor),
            min_puff_ms: self.min_puff_ms.unwrap_or(defaults.min_puff_ms),
            temp_delta_threshold: self.temp_delta.unwrap_or(defaults.temp_delta_threshold),
            display_min_puff_s: self.min_puff_s.or(defaults.display_min_puff_s),
        };
        f.validate().map_err(ApiError::BadRequest)?;
        Ok(f)
    }

    fn kinds(&self) -> Result<Option<Vec<EpisodeKind>>, ApiError> {
        let Some(k) = &self.kinds else { return Ok(None) };
        k.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse().map_err(ApiError::BadRequest))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn query(q: Result<Query<AnalysisQuery>, QueryRejection>) -> Result<AnalysisQuery, ApiError> {
    q.map(|Query(q)| q).map_err(|e| ApiError::BadRequest(e.body_text()))
}

fn run_analysis(state: &AppState, id: &str, q: &AnalysisQuery) -> Result<(Arc<StoredSession>, Analysis), ApiError> {
    let session = state.session(id)?;
    let filter = q.filter(&state.defaults)?;
    let a = analyze(&session.events, &filter, state.zone);
    Ok((session, a))
}

#[derive(Debug, Serialize)]
pub struct EpisodeView {
    #[serde(flatten)]
    pub episode: Episode,
    pub date: NaiveDate,
    pub range: String,
    pub duration_ms: f64,
    pub temp_on: Option<TemperatureReading>,
    pub temp_off: Option<TemperatureReading>,
}

#[derive(Debug, Serialize)]
pub struct EpisodesResponse {
    pub session: String,
    pub filter: FilterConfig,
    pub raw_puff_count: usize,
    pub episodes: Vec<EpisodeView>,
}

/// Episodes in table order (start, then kind), with readings for puffs.
pub fn episode_views(a: &Analysis) -> Vec<EpisodeView> {
    let mut all: Vec<_> =
        a.puffs.iter().copied().chain(a.touches.iter().map(|t| friends_core::PuffWithTemps::bare(*t))).collect();
    all.sort_by_key(|p| (p.episode.start, p.episode.kind));
    all.into_iter()
        .map(|p| EpisodeView {
            episode: p.episode,
            date: p.episode.date(&a.zone),
            range: episode_range(&p.episode, &a.zone),
            duration_ms: p.episode.duration_ms(),
            temp_on: p.temp_on,
            temp_off: p.temp_off,
        })
        .collect()
}

async fn episodes(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<AnalysisQuery>, QueryRejection>,
) -> ApiResult<EpisodesResponse> {
    let q = query(q)?;
    let kinds = q.kinds()?;
    let (session, a) = run_analysis(&state, &id, &q)?;
    let mut episodes = episode_views(&a);
    if let Some(kinds) = kinds {
        episodes.retain(|e| kinds.contains(&e.episode.kind));
    }
    Ok(Json(EpisodesResponse {
        session: session.id.clone(),
        filter: a.filter,
        raw_puff_count: a.raw_puff_count,
        episodes,
    }))
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<AnalysisQuery>, QueryRejection>,
) -> ApiResult<Vec<PTMetrics>> {
    let q = query(q)?;
    let (_, a) = run_analysis(&state, &id, &q)?;
    Ok(Json(a.metrics()))
}

/// One day's tracks for `?date=`, otherwise every day with episodes.
async fn timeline(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<AnalysisQuery>, QueryRejection>,
) -> ApiResult<Vec<DayPlot>> {
    let q = query(q)?;
    let (_, a) = run_analysis(&state, &id, &q)?;
    Ok(Json(match q.date {
        Some(d) => vec![a.day_plot(d)],
        None => a.day_plots(),
    }))
}
