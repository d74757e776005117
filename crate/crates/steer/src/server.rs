//! HTTP and websocket front of the session core.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use mfswarm::analysis::UncertaintyReport;
use mfswarm::{Bin, Repertoire, WorldConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::protocol::{
    error_body, ArchiveSummary, ArchiveView, CellDetail, CellSummary, ClientMessage, ErrorCode, ErrorMessage,
    RateRequest, ServerMessage, SessionInfo, StartRequest, StepRequest, SwitchRequest,
};
use crate::session::{Session, SessionOptions};

/// Frames a subscriber may fall behind before it is dropped.
pub const DEFAULT_CHANNEL_CAPACITY: usize = 256;
/// Poll interval of a paused session loop.
const PAUSED_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Archive(#[from] mfswarm::Error),
    #[error("{path}:{line}: {msg}")]
    Sidecar { path: PathBuf, line: usize, msg: String },
}

/// One line of an `<archive>.uncertainty.jsonl` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEntry {
    pub bins: Bin,
    pub report: UncertaintyReport,
}

pub struct LoadedArchive {
    pub repertoire: Arc<Repertoire>,
    pub uncertainty: BTreeMap<Bin, UncertaintyReport>,
}

impl LoadedArchive {
    pub fn new(repertoire: Repertoire) -> Self {
        LoadedArchive { repertoire: Arc::new(repertoire), uncertainty: BTreeMap::new() }
    }
}

fn read_sidecar(path: &Path) -> Result<BTreeMap<Bin, UncertaintyReport>, LoadError> {
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let mut out = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LoadError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: UncertaintyEntry = serde_json::from_str(&line)
            .map_err(|e| LoadError::Sidecar { path: path.into(), line: n + 1, msg: e.to_string() })?;
        out.insert(entry.bins, entry.report);
    }
    Ok(out)
}

/// Loads every `*.jsonl` archive in `dir` (sidecars excluded), keyed by file
/// stem. Files are only read.
pub fn load_archive_dir(dir: &Path) -> Result<BTreeMap<String, LoadedArchive>, LoadError> {
    let io = |source| LoadError::Io { path: dir.into(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if !name.ends_with(".jsonl") || name.ends_with(".uncertainty.jsonl") {
            continue;
        }
        let stem = name.trim_end_matches(".jsonl").to_owned();
        let mut archive = LoadedArchive::new(Repertoire::load(&path)?);
        let sidecar = path.with_file_name(format!("{stem}.uncertainty.jsonl"));
        if sidecar.exists() {
            archive.uncertainty = read_sidecar(&sidecar)?;
        }
        out.insert(stem, archive);
    }
    Ok(out)
}

struct Live {
    session: Session,
    /// Dropped when the session is deleted, which ends every subscription.
    tx: Option<broadcast::Sender<Arc<str>>>,
}

struct LiveSession {
    state: Mutex<Live>,
}

impl LiveSession {
    fn lock(&self) -> MutexGuard<'_, Live> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn info(&self) -> SessionInfo {
        let live = self.lock();
        let s = &live.session;
        SessionInfo {
            id: s.id().to_owned(),
            archive: s.archive_name().to_owned(),
            bin: s.bin(),
            seed: s.seed(),
            t: s.world().clock(),
            steps: s.world().steps(),
            paused: s.paused(),
            rate: s.rate(),
            decimation: s.decimation(),
            seq: s.seq(),
            pending_switches: s.pending_switches(),
            subscribers: live.tx.as_ref().map_or(0, |tx| tx.receiver_count()),
        }
    }

    /// Applies a command and broadcasts whatever it produced.
    fn apply(&self, msg: ClientMessage) -> Result<(), ErrorMessage> {
        let mut live = self.lock();
        let out = live.session.command(msg)?;
        live.broadcast(out);
        Ok(())
    }
}

impl Live {
    fn broadcast(&self, msgs: Vec<ServerMessage>) {
        if let Some(tx) = &self.tx {
            for m in msgs {
                // no receivers is fine
                let _ = tx.send(Arc::from(m.to_json()));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub world: WorldConfig,
    pub defaults: SessionOptions,
    pub channel_capacity: usize,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            world: WorldConfig::default(),
            defaults: SessionOptions::default(),
            channel_capacity: DEFAULT_CHANNEL_CAPACITY,
        }
    }
}

struct Inner {
    archives: BTreeMap<String, LoadedArchive>,
    options: ServerOptions,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(archives: BTreeMap<String, LoadedArchive>, options: ServerOptions) -> AppState {
        AppState {
            inner: Arc::new(Inner { archives, options, sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1) }),
        }
    }

    pub fn load(dir: &Path, options: ServerOptions) -> Result<AppState, LoadError> {
        Ok(AppState::new(load_archive_dir(dir)?, options))
    }

    pub fn archive_names(&self) -> Vec<String> {
        self.inner.archives.keys().cloned().collect()
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, Arc<LiveSession>>> {
        self.inner.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn archive(&self, name: &str) -> Result<&LoadedArchive, ApiError> {
        self.inner.archives.get(name).ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, ErrorCode::UnknownArchive, format!("unknown archive {name:?}"))
        })
    }

    fn session(&self, id: &str) -> Result<Arc<LiveSession>, ApiError> {
        self.sessions().get(id).cloned().ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, ErrorCode::UnknownSession, format!("unknown session {id:?}"))
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorMessage,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorMessage::new(code, message) }
    }
}

fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::UnknownSession | ErrorCode::UnknownArchive | ErrorCode::EmptyCell => StatusCode::NOT_FOUND,
        ErrorCode::BinOutOfRange
        | ErrorCode::MalformedMessage
        | ErrorCode::UnsupportedVersion
        | ErrorCode::InvalidArgument => StatusCode::BAD_REQUEST,
        ErrorCode::Lagged => StatusCode::CONFLICT,
    }
}

impl From<ErrorMessage> for ApiError {
    fn from(body: ErrorMessage) -> Self {
        ApiError { status: status_of(body.code), body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, [(header::CONTENT_TYPE, "application/json")], error_body(&self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::MalformedMessage, e.to_string()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/archives", get(list_archives))
        .route("/api/v1/archives/{name}", get(get_archive))
        .route("/api/v1/archives/{name}/cells/{i}/{j}/{k}", get(get_cell))
        .route("/api/v1/sessions", post(start_session).get(list_sessions))
        .route("/api/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/v1/sessions/{id}/pause", post(pause))
        .route("/api/v1/sessions/{id}/resume", post(resume))
        .route("/api/v1/sessions/{id}/rate", post(set_rate))
        .route("/api/v1/sessions/{id}/switch", post(switch))
        .route("/api/v1/sessions/{id}/step", post(step))
        .route("/api/v1/sessions/{id}/stream", get(stream))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve_until<F>(listener: tokio::net::TcpListener, state: AppState, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn list_archives(State(app): State<AppState>) -> Json<Vec<ArchiveSummary>> {
    Json(
        app.inner
            .archives
            .iter()
            .map(|(name, a)| {
                let r = &a.repertoire;
                ArchiveSummary {
                    name: name.clone(),
                    dims: r.dims(),
                    cells: r.len(),
                    config_hash: r.config_hash().to_owned(),
                    master_seed: r.master_seed(),
                }
            })
            .collect(),
    )
}

async fn get_archive(State(app): State<AppState>, UrlPath(name): UrlPath<String>) -> ApiResult<Json<ArchiveView>> {
    let r = &app.archive(&name)?.repertoire;
    Ok(Json(ArchiveView {
        name,
        header: r.header(),
        cells: r.iter().map(|c| CellSummary { bins: c.bins, raw: c.raw, fitness: c.fitness }).collect(),
    }))
}

async fn get_cell(
    State(app): State<AppState>,
    UrlPath((name, i, j, k)): UrlPath<(String, usize, usize, usize)>,
) -> ApiResult<Json<CellDetail>> {
    let archive = app.archive(&name)?;
    let bin = Bin::new(i, j, k);
    crate::session::lookup(&archive.repertoire, bin)?;
    let cell = archive.repertoire.get(bin).expect("looked up").clone();
    Ok(Json(CellDetail { archive: name, cell, uncertainty: archive.uncertainty.get(&bin).cloned() }))
}

async fn start_session(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req: StartRequest = parse_body(&body)?;
    let archive = app.archive(&req.archive)?.repertoire.clone();
    let defaults = &app.inner.options.defaults;
    let options = SessionOptions {
        decimation: req.decimation.unwrap_or(defaults.decimation),
        rate: req.rate.unwrap_or(defaults.rate),
        paused: req.paused.unwrap_or(defaults.paused),
    };
    let id = format!("s{}", app.inner.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(&id, &req.archive, archive, app.inner.options.world.clone(), req.bin, req.seed, options)?;
    let (tx, _) = broadcast::channel(app.inner.options.channel_capacity);
    let live = Arc::new(LiveSession { state: Mutex::new(Live { session, tx: Some(tx) }) });
    app.sessions().insert(id, live.clone());
    tokio::spawn(run_session(live.clone()));
    Ok((StatusCode::CREATED, Json(live.info())))
}

/// The session's simulation loop. Ends when the session is deleted.
async fn run_session(live: Arc<LiveSession>) {
    loop {
        let wait = {
            let mut guard = live.lock();
            if guard.tx.is_none() {
                return;
            }
            if guard.session.paused() {
                PAUSED_POLL
            } else {
                let out = guard.session.tick();
                guard.broadcast(out);
                Duration::from_secs_f64(guard.session.tick_period())
            }
        };
        tokio::time::sleep(wait).await;
    }
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionInfo>> {
    let sessions: Vec<Arc<LiveSession>> = app.sessions().values().cloned().collect();
    let mut infos: Vec<SessionInfo> = sessions.iter().map(|s| s.info()).collect();
    infos.sort_by(|a, b| a.id.cmp(&b.id));
    Json(infos)
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(app.session(&id)?.info()))
}

async fn delete_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    let live = app.session(&id)?;
    app.sessions().remove(&id);
    live.lock().tx = None;
    Ok(StatusCode::NO_CONTENT)
}

fn command(app: &AppState, id: &str, msg: ClientMessage) -> ApiResult<Json<SessionInfo>> {
    let live = app.session(id)?;
    live.apply(msg)?;
    Ok(Json(live.info()))
}

async fn pause(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionInfo>> {
    command(&app, &id, ClientMessage::Pause { id: None })
}

async fn resume(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionInfo>> {
    command(&app, &id, ClientMessage::Resume { id: None })
}

async fn set_rate(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<SessionInfo>> {
    let req: RateRequest = parse_body(&body)?;
    command(&app, &id, ClientMessage::SetRate { rate: req.rate, id: None })
}

async fn switch(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req: SwitchRequest = parse_body(&body)?;
    command(&app, &id, ClientMessage::SwitchBehavior { bin: req.bin, id: None }).map(|j| (StatusCode::ACCEPTED, j))
}

async fn step(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<SessionInfo>> {
    let req: StepRequest = parse_body(&body)?;
    command(&app, &id, ClientMessage::Step { count: req.count, id: None })
}

async fn stream(ws: WebSocketUpgrade, State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let live = app.session(&id)?;
    Ok(ws.on_upgrade(move |socket| subscriber(socket, live)))
}

async fn subscriber(socket: WebSocket, live: Arc<LiveSession>) {
    // snapshot and subscription under one lock: nothing broadcast in between
    let (snapshot, mut rx) = {
        let guard = live.lock();
        let Some(tx) = &guard.tx else { return };
        (guard.session.snapshot(), tx.subscribe())
    };
    let (mut sink, mut incoming) = socket.split();
    let text = |s: String| Message::Text(s.into());
    if sink.send(text(ServerMessage::Snapshot(snapshot).to_json())).await.is_err() {
        return;
    }
    // the receiver is released before the closing frames go out, so a client
    // that sees the close also sees its subscription gone
    let farewell: Vec<Message> = loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(json) => {
                    if sink.send(text(json.to_string())).await.is_err() {
                        break Vec::new();
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let err = ErrorMessage::new(ErrorCode::Lagged, format!("subscriber fell {n} messages behind"));
                    break vec![text(ServerMessage::Error(err).to_json()), Message::Close(None)];
                }
                Err(broadcast::error::RecvError::Closed) => break vec![Message::Close(None)],
            },
            msg = incoming.next() => match msg {
                Some(Ok(Message::Text(t))) => {
                    if let Err(e) = ClientMessage::from_json(t.as_str()).and_then(|m| live.apply(m)) {
                        if sink.send(text(ServerMessage::Error(e).to_json())).await.is_err() {
                            break Vec::new();
                        }
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    let e = ErrorMessage::new(ErrorCode::MalformedMessage, "binary messages are not accepted");
                    if sink.send(text(ServerMessage::Error(e).to_json())).await.is_err() {
                        break Vec::new();
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break Vec::new(),
                Some(Ok(_)) => {}
            },
        }
    };
    drop(rx);
    for m in farewell {
        if sink.send(m).await.is_err() {
            break;
        }
    }
}
