//! Local HTTP control surface over the acquisition engine.
//!
//! Endpoints:
//!
//! | method | path | purpose |
//! |---|---|---|
//! | GET  | `/api/services` | registered services |
//! | POST | `/api/auth` | start (no `code`) or finish (with `code`) authorization |
//! | GET  | `/api/files?service=&filter=` | discovery plus selection |
//! | POST | `/api/acquire` | start a job over explicit file ids |
//! | GET  | `/api/jobs/{id}` | job status and, once done, custody records |
//!
//! Anything else is served from the optional static directory.

use std::collections::{BTreeSet, HashMap};
use std::net::{SocketAddr, TcpListener as StdListener};
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use kumoforge_core::engine::{
    acquire, prepare, AcquireOptions, AcquisitionJob, EngineError, FailureRecord, FileManifest,
    JobProgress, ManifestRow, ProgressSnapshot, RetryPolicy, Workspace,
};
use kumoforge_core::provider::{
    complete_auth, Driver, ProviderError, ProviderSession, Registry, ServiceDescriptor, ServiceId,
    TokenStore,
};
use kumoforge_core::{AcquisitionRecord, FilterSpec};

pub const DEFAULT_PORT: u16 = 5000;

#[derive(Clone)]
pub struct ApiConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Working directory for `config/`, `localdata/` and `downloaded/`.
    pub base_dir: PathBuf,
    pub config_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl ApiConfig {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        ApiConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            base_dir: base_dir.into(),
            config_dir: None,
            static_dir: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn is_loopback(&self) -> bool {
        matches!(self.host.as_str(), "127.0.0.1" | "localhost" | "::1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    pub progress: ProgressSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<String>,
    pub records: Vec<AcquisitionRecord>,
    pub failures: Vec<FailureRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthRequest {
    pub service_id: String,
    #[serde(default)]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilesResponse {
    pub service: ServiceId,
    pub user: String,
    pub csv_path: String,
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquireRequest {
    pub service: String,
    pub file_ids: Vec<String>,
    /// Relative to the base directory; defaults to `downloaded/<user>/`.
    #[serde(default)]
    pub destination: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquireResponse {
    pub job_id: String,
}

/// Error body. `auth_url` accompanies 401 responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_url: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_ids: Vec<String>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ApiErrorBody {
                code: code.into(),
                message: message.into(),
                auth_url: None,
                unknown_ids: Vec::new(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn provider_error(e: ProviderError) -> ApiError {
    let status = match e {
        ProviderError::AuthCodeRejected | ProviderError::UnknownService(_) => {
            StatusCode::BAD_REQUEST
        }
        ProviderError::TokenExpired | ProviderError::NotAuthenticated(_) => {
            StatusCode::UNAUTHORIZED
        }
        _ => StatusCode::BAD_GATEWAY,
    };
    ApiError::new(status, e.code(), e.to_string())
}

fn engine_error(e: EngineError) -> ApiError {
    match e {
        EngineError::Provider(p) => provider_error(p),
        EngineError::UnknownManifestId(ids) => {
            let mut err = ApiError::new(
                StatusCode::BAD_REQUEST,
                "UNKNOWN_MANIFEST_ID",
                format!("not in the account: {}", ids.join(", ")),
            );
            err.body.unknown_ids = ids;
            err
        }
        EngineError::DestinationBusy(p) => ApiError::new(
            StatusCode::CONFLICT,
            "DESTINATION_BUSY",
            format!("a job is already running for {}", p.display()),
        ),
        EngineError::DiscoveryIncomplete(_) => {
            ApiError::new(StatusCode::BAD_GATEWAY, e.code(), e.to_string())
        }
        other => ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            other.code(),
            other.to_string(),
        ),
    }
}

struct JobEntry {
    id: String,
    progress: Arc<JobProgress>,
    inner: Mutex<JobOutcome>,
}

struct JobOutcome {
    state: JobState,
    summary: Option<String>,
    duration: Option<String>,
    records: Vec<AcquisitionRecord>,
    failures: Vec<FailureRecord>,
    error: Option<String>,
}

impl JobEntry {
    fn status(&self) -> JobStatus {
        let o = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        JobStatus {
            job_id: self.id.clone(),
            state: o.state,
            progress: self.progress.snapshot(),
            summary: o.summary.clone(),
            duration: o.duration.clone(),
            records: o.records.clone(),
            failures: o.failures.clone(),
            error: o.error.clone(),
        }
    }
}

struct ApiState {
    registry: Registry,
    workspace: Workspace,
    store: TokenStore,
    static_dir: Option<PathBuf>,
    retry: RetryPolicy,
    jobs: Mutex<HashMap<String, Arc<JobEntry>>>,
    /// Destinations with a queued or running job.
    busy: Arc<Mutex<BTreeSet<PathBuf>>>,
    next_job: AtomicU64,
}

type Shared = Arc<ApiState>;

impl ApiState {
    fn driver(&self, service: &str) -> ApiResult<(ServiceId, Arc<dyn Driver>)> {
        let id: ServiceId = service.parse().map_err(provider_error)?;
        let driver = self.registry.get(id).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "UNKNOWN_SERVICE",
                format!("{id} is not registered"),
            )
        })?;
        Ok((id, driver))
    }

    /// 401 with the authorization URL attached, for the UI to display.
    fn challenge(&self, driver: &dyn Driver, code: &str) -> ApiError {
        match driver.begin_auth() {
            Ok(url) => {
                let mut err = ApiError::new(
                    StatusCode::UNAUTHORIZED,
                    code,
                    "authorization required; open auth_url and POST the code to /api/auth",
                );
                err.body.auth_url = Some(url);
                err
            }
            Err(e) => provider_error(e),
        }
    }

    fn session(&self, id: ServiceId, driver: &dyn Driver) -> ApiResult<ProviderSession> {
        match self.store.load(id) {
            Ok(s) => Ok(s),
            Err(ProviderError::NotAuthenticated(_)) => {
                Err(self.challenge(driver, "NOT_AUTHENTICATED"))
            }
            Err(e) => Err(provider_error(e)),
        }
    }

    fn prepare(
        &self,
        id: ServiceId,
        driver: &dyn Driver,
        filter: &FilterSpec,
    ) -> ApiResult<(ProviderSession, kumoforge_core::engine::Plan)> {
        let session = self.session(id, driver)?;
        match prepare(driver, &session, &self.workspace, filter, &self.retry) {
            Ok(plan) => Ok((session, plan)),
            Err(EngineError::Provider(
                ProviderError::TokenExpired | ProviderError::NotAuthenticated(_),
            )) => {
                let _ = self.store.remove(id);
                Err(self.challenge(driver, "TOKEN_EXPIRED"))
            }
            Err(e) => Err(engine_error(e)),
        }
    }
}

/// Runs blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

async fn services(State(state): State<Shared>) -> Json<Vec<ServiceDescriptor>> {
    Json(state.registry.descriptors())
}

async fn auth(
    State(state): State<Shared>,
    Json(req): Json<AuthRequest>,
) -> ApiResult<Json<AuthResponse>> {
    blocking(move || {
        let (_, driver) = state.driver(&req.service_id)?;
        match req.code.as_deref().map(str::trim) {
            None | Some("") => Ok(Json(AuthResponse {
                auth_url: Some(driver.begin_auth().map_err(provider_error)?),
                user: None,
            })),
            Some(code) => {
                let session =
                    complete_auth(driver.as_ref(), code, &state.store).map_err(provider_error)?;
                Ok(Json(AuthResponse {
                    auth_url: None,
                    user: Some(session.user),
                }))
            }
        }
    })
    .await
}

#[derive(Debug, Deserialize)]
struct FilesQuery {
    service: String,
    filter: Option<String>,
}

async fn files(
    State(state): State<Shared>,
    Query(q): Query<FilesQuery>,
) -> ApiResult<Json<FilesResponse>> {
    blocking(move || {
        let (id, driver) = state.driver(&q.service)?;
        let filter: FilterSpec = q.filter.as_deref().unwrap_or("all").parse().map_err(
            |e: kumoforge_core::category::UnknownFilter| {
                ApiError::new(StatusCode::BAD_REQUEST, "UNKNOWN_FILTER", e.to_string())
            },
        )?;
        let (session, plan) = state.prepare(id, driver.as_ref(), &filter)?;
        let shown = FileManifest::new(session.service, session.user.clone(), plan.targets);
        Ok(Json(FilesResponse {
            service: session.service,
            user: session.user,
            csv_path: plan.discovery.csv_path.to_string_lossy().into_owned(),
            rows: shown.rows(),
        }))
    })
    .await
}

/// Releases a destination reservation when the job thread ends.
struct Reservation {
    busy: Arc<Mutex<BTreeSet<PathBuf>>>,
    key: PathBuf,
}

impl Drop for Reservation {
    fn drop(&mut self) {
        self.busy
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&self.key);
    }
}

fn within(base: &FsPath, rel: &FsPath) -> Option<PathBuf> {
    if rel.is_absolute() || rel.components().any(|c| matches!(c, Component::ParentDir)) {
        return None;
    }
    Some(base.join(rel))
}

async fn start_acquire(
    State(state): State<Shared>,
    Json(req): Json<AcquireRequest>,
) -> ApiResult<(StatusCode, Json<AcquireResponse>)> {
    blocking(move || {
        if req.file_ids.is_empty() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "EMPTY_SELECTION",
                "select at least one file",
            ));
        }
        let (id, driver) = state.driver(&req.service)?;
        let filter = FilterSpec::manifest(req.file_ids.iter().cloned());
        let (session, plan) = state.prepare(id, driver.as_ref(), &filter)?;
        let destination = match &req.destination {
            Some(rel) => within(&state.workspace.base, rel).ok_or_else(|| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "BAD_DESTINATION",
                    "destination must be a relative path inside the base directory",
                )
            })?,
            None => state.workspace.downloads_for(&session.user),
        };
        let key = std::path::absolute(&destination).unwrap_or_else(|_| destination.clone());
        if !state
            .busy
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.clone())
        {
            return Err(engine_error(EngineError::DestinationBusy(destination)));
        }
        let reservation = Reservation {
            busy: state.busy.clone(),
            key,
        };

        let job_id = format!("job-{}", state.next_job.fetch_add(1, Ordering::SeqCst) + 1);
        let entry = Arc::new(JobEntry {
            id: job_id.clone(),
            progress: Arc::new(JobProgress::default()),
            inner: Mutex::new(JobOutcome {
                state: JobState::Pending,
                summary: None,
                duration: None,
                records: Vec::new(),
                failures: Vec::new(),
                error: None,
            }),
        });
        state
            .jobs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(job_id.clone(), entry.clone());

        let options = AcquireOptions {
            retry: state.retry,
            progress: Some(entry.progress.clone()),
            display_base: Some(state.workspace.base.clone()),
            ..AcquireOptions::default()
        };
        let spawned = std::thread::Builder::new()
            .name(job_id.clone())
            .spawn(move || {
                let _reservation = reservation;
                entry.inner.lock().unwrap_or_else(|e| e.into_inner()).state = JobState::Running;
                let job = AcquisitionJob::new(session, filter, destination);
                let result = acquire(driver.as_ref(), job, &plan.targets, &options);
                let mut o = entry.inner.lock().unwrap_or_else(|e| e.into_inner());
                match result {
                    Ok(job) => {
                        o.summary = Some(job.summary_line());
                        o.duration = Some(job.duration_line());
                        o.records = job.records;
                        o.failures = job.failures;
                        o.state = JobState::Done;
                    }
                    Err(e) => {
                        o.error = Some(format!("{}: {e}", e.code()));
                        o.state = JobState::Failed;
                    }
                }
            });
        if let Err(e) = spawned {
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "INTERNAL",
                e.to_string(),
            ));
        }
        Ok((StatusCode::ACCEPTED, Json(AcquireResponse { job_id })))
    })
    .await
}

async fn job_status(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<JobStatus>> {
    let entry = state
        .jobs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NO_SUCH_JOB", id.clone()))?;
    Ok(Json(entry.status()))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Shared>, uri: Uri) -> Response {
    let not_found = || (StatusCode::NOT_FOUND, "not found").into_response();
    let Some(root) = &state.static_dir else {
        return not_found();
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(path) = within(root, FsPath::new(rel)) else {
        return not_found();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => not_found(),
    }
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/services", get(services))
        .route("/api/auth", post(auth))
        .route("/api/files", get(files))
        .route("/api/acquire", post(start_acquire))
        .route("/api/jobs/{id}", get(job_status))
        .fallback(static_file)
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
#[error("SERVE_BIND_ERROR: cannot bind {addr}: {source}")]
pub struct BindError {
    pub addr: String,
    #[source]
    pub source: std::io::Error,
}

pub struct ControlServer;

impl ControlServer {
    pub fn start(config: ApiConfig, registry: Registry) -> Result<ControlHandle, BindError> {
        let addr_text = format!("{}:{}", config.host, config.port);
        let bind_err = |source| BindError {
            addr: addr_text.clone(),
            source,
        };
        let listener = StdListener::bind(&addr_text).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let addr = listener.local_addr().map_err(bind_err)?;

        let workspace = Workspace::new(&config.base_dir);
        let store = TokenStore::new(
            config
                .config_dir
                .clone()
                .unwrap_or_else(|| workspace.config_dir()),
        );
        let state = Arc::new(ApiState {
            registry,
            workspace,
            store,
            static_dir: config.static_dir.clone(),
            retry: config.retry,
            jobs: Mutex::new(HashMap::new()),
            busy: Arc::new(Mutex::new(BTreeSet::new())),
            next_job: AtomicU64::new(0),
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .worker_threads(2)
            .build()
            .map_err(bind_err)?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let thread = std::thread::Builder::new()
            .name("control-api".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            tracing::error!("listener: {e}");
                            return;
                        }
                    };
                    let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                        let _ = rx.await;
                    });
                    if let Err(e) = serve.await {
                        tracing::error!("server stopped: {e}");
                    }
                });
                drop(runtime);
                // Drivers own blocking HTTP clients, which must not be
                // dropped inside the async runtime.
                drop(state);
            })
            .map_err(bind_err)?;
        Ok(ControlHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }
}

pub struct ControlHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ControlHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn destinations_stay_inside_base() {
        let base = FsPath::new("/case");
        assert_eq!(
            within(base, FsPath::new("a/b")),
            Some(PathBuf::from("/case/a/b"))
        );
        assert_eq!(within(base, FsPath::new("../x")), None);
        assert_eq!(within(base, FsPath::new("/etc")), None);
    }

    #[test]
    fn loopback_detection() {
        let mut c = ApiConfig::new(".");
        assert!(c.is_loopback());
        c.host = "0.0.0.0".into();
        assert!(!c.is_loopback());
    }

    #[test]
    fn job_state_wire_names() {
        assert_eq!(serde_json::to_string(&JobState::Done).unwrap(), "\"DONE\"");
        assert_eq!(
            serde_json::to_string(&JobState::Pending).unwrap(),
            "\"PENDING\""
        );
    }
}
