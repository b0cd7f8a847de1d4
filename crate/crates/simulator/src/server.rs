//! HTTP front end of the simulator.

use std::collections::HashSet;
use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use kumoforge_core::provider::simdrive::DEFAULT_PAGE_SIZE;
use kumoforge_core::provider::wire::{
    WireAbout, WireAuthCode, WireError, WireListing, WireRevisions, WireToken, WireTokenRequest,
};

use crate::fixture::{Fixture, FixtureError, FixtureSpec, DEFAULT_MAX_FILES};
use crate::prng::KeyedStream;
use crate::throttle::{ThrottleConfig, TokenBucket};

pub const MAX_PAGE_SIZE: usize = 1000;
const CHUNK: usize = 16 * 1024;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub fixture: FixtureSpec,
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub throttle: ThrottleConfig,
    /// Enables `/admin/*`.
    pub test_mode: bool,
    pub max_files: usize,
}

impl SimConfig {
    pub fn new(fixture: FixtureSpec) -> Self {
        SimConfig {
            fixture,
            host: "127.0.0.1".into(),
            port: 0,
            throttle: ThrottleConfig::unlimited(),
            test_mode: true,
            max_files: DEFAULT_MAX_FILES,
        }
    }

    pub fn throttled(mut self, bytes_per_sec: u64) -> Self {
        self.throttle = ThrottleConfig::rate(bytes_per_sec);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("SERVE_BIND_ERROR: cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Bind { .. } => "SERVE_BIND_ERROR",
            SimError::Fixture(_) => "FIXTURE_TOO_LARGE",
        }
    }
}

/// Fault injection request body for `POST /admin/fault`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRequest {
    pub kind: String,
    #[serde(default)]
    pub n: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerStats {
    pub requests: u64,
    pub listing_requests: u64,
    pub content_requests: u64,
    pub bytes_served: u64,
    pub dropped: u64,
    pub corrupted: u64,
}

#[derive(Default)]
struct Faults {
    drop_next: u32,
    truncate_next_page: u32,
    corrupt_next: u32,
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    listing_requests: AtomicU64,
    content_requests: AtomicU64,
    bytes_served: AtomicU64,
    dropped: AtomicU64,
    corrupted: AtomicU64,
}

struct Auth {
    code_armed: bool,
    issued: u64,
    valid: HashSet<String>,
}

struct AppState {
    fixture: RwLock<Arc<Fixture>>,
    bucket: Option<Arc<TokenBucket>>,
    auth: Mutex<Auth>,
    faults: Mutex<Faults>,
    counters: Counters,
    test_mode: bool,
    max_files: usize,
}

type Shared = Arc<AppState>;

impl AppState {
    fn fixture(&self) -> Arc<Fixture> {
        self.fixture
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    fn faults(&self) -> std::sync::MutexGuard<'_, Faults> {
        self.faults.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn auth(&self) -> std::sync::MutexGuard<'_, Auth> {
        self.auth.lock().unwrap_or_else(|e| e.into_inner())
    }
}

struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = WireError {
            code: self.1.to_string(),
            message: self.2,
        };
        (self.0, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn no_such_file(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "NO_SUCH_FILE", id.to_string())
}

fn check_token(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match token {
        Some(t) if state.auth().valid.contains(t) => Ok(()),
        Some(_) => Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "TOKEN_EXPIRED",
            "access token is not valid".into(),
        )),
        None => Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "NOT_AUTHENTICATED",
            "missing bearer token".into(),
        )),
    }
}

/// Authorization plus the DROP_NEXT_N fault, shared by every `/files*` route.
fn gate(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    state.counters.requests.fetch_add(1, Ordering::Relaxed);
    {
        let mut f = state.faults();
        if f.drop_next > 0 {
            f.drop_next -= 1;
            state.counters.dropped.fetch_add(1, Ordering::Relaxed);
            return Err(ApiError(
                StatusCode::SERVICE_UNAVAILABLE,
                "TRANSIENT_IO",
                "injected drop".into(),
            ));
        }
    }
    check_token(state, headers)
}

async fn health() -> &'static str {
    "ok"
}

async fn about(State(state): State<Shared>) -> Json<WireAbout> {
    Json(WireAbout {
        service: "simdrive".into(),
        dialect: state.fixture().dialect(),
        default_page_size: DEFAULT_PAGE_SIZE,
    })
}

/// Stands in for the provider's consent page: visiting it arms a one-time
/// access code.
async fn authorize(State(state): State<Shared>) -> Json<WireAuthCode> {
    state.auth().code_armed = true;
    Json(WireAuthCode {
        code: access_code(state.fixture().spec.seed),
    })
}

pub fn access_code(seed: u64) -> String {
    format!("SIM-{seed}-OK")
}

async fn token(
    State(state): State<Shared>,
    Json(req): Json<WireTokenRequest>,
) -> ApiResult<Json<WireToken>> {
    let fx = state.fixture();
    let mut auth = state.auth();
    if !auth.code_armed || req.code != access_code(fx.spec.seed) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "AUTH_CODE_REJECTED",
            "unknown or used access code".into(),
        ));
    }
    auth.code_armed = false;
    auth.issued += 1;
    let t = format!("simtok-{}-{}", fx.spec.seed, auth.issued);
    auth.valid.insert(t.clone());
    Ok(Json(WireToken {
        access_token: t,
        user: fx.user().to_string(),
    }))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    page_size: Option<usize>,
    page_token: Option<String>,
}

async fn list_files(
    State(state): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<ListQuery>,
) -> ApiResult<Json<WireListing>> {
    gate(&state, &headers)?;
    state
        .counters
        .listing_requests
        .fetch_add(1, Ordering::Relaxed);
    let fx = state.fixture();
    let size = q
        .page_size
        .unwrap_or(DEFAULT_PAGE_SIZE)
        .clamp(1, MAX_PAGE_SIZE);
    let start = match q.page_token.as_deref() {
        None | Some("") => 0,
        Some(t) => t
            .strip_prefix('p')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n <= fx.files().len())
            .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "BAD_PAGE_TOKEN", t.to_string()))?,
    };
    let end = (start + size).min(fx.files().len());
    let mut page = &fx.files()[start..end];
    let next = (end < fx.files().len()).then(|| format!("p{end}"));
    if next.is_some() {
        let mut f = state.faults();
        if f.truncate_next_page > 0 {
            f.truncate_next_page -= 1;
            page = &page[..page.len() / 2];
        }
    }
    Ok(Json(WireListing {
        files: page.iter().map(|f| fx.wire_file(f)).collect(),
        next_page_token: next,
    }))
}

async fn file_detail(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    gate(&state, &headers)?;
    let fx = state.fixture();
    let f = fx.get(&id).ok_or_else(|| no_such_file(&id))?;
    Ok(Json(fx.wire_detail(f)).into_response())
}

async fn revisions(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<WireRevisions>> {
    gate(&state, &headers)?;
    let fx = state.fixture();
    let f = fx.get(&id).ok_or_else(|| no_such_file(&id))?;
    Ok(Json(WireRevisions {
        revisions: f.revisions.iter().map(|r| fx.wire_revision(f, r)).collect(),
    }))
}

enum Source {
    Keyed(KeyedStream),
    Memory(Bytes),
}

impl Source {
    fn chunk(&self, offset: u64, len: usize) -> Vec<u8> {
        match self {
            Source::Keyed(s) => s.bytes(offset, len),
            Source::Memory(b) => b[offset as usize..offset as usize + len].to_vec(),
        }
    }
}

/// Streams `size` bytes with an explicit Content-Length, paced by the shared
/// bucket. `corrupt_at` flips one byte.
fn stream_body(state: &Shared, source: Source, size: u64, corrupt_at: Option<u64>) -> Response {
    state
        .counters
        .content_requests
        .fetch_add(1, Ordering::Relaxed);
    let bucket = state.bucket.clone();
    let st = state.clone();
    let body = futures::stream::unfold(0u64, move |offset| {
        let bucket = bucket.clone();
        let st = st.clone();
        let chunk = (offset < size).then(|| {
            let n = (size - offset).min(CHUNK as u64) as usize;
            let mut buf = source.chunk(offset, n);
            if let Some(at) = corrupt_at.filter(|&at| at >= offset && at < offset + n as u64) {
                buf[(at - offset) as usize] ^= 0xFF;
            }
            buf
        });
        async move {
            let buf = chunk?;
            if let Some(b) = &bucket {
                b.acquire(buf.len() as u64).await;
            }
            st.counters
                .bytes_served
                .fetch_add(buf.len() as u64, Ordering::Relaxed);
            let next = offset + buf.len() as u64;
            Some((Ok::<_, std::io::Error>(Bytes::from(buf)), next))
        }
    });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, "application/octet-stream")
        .header(header::CONTENT_LENGTH, size)
        .body(Body::from_stream(body))
        .expect("valid response")
}

fn take_corruption(state: &AppState, size: u64) -> Option<u64> {
    let mut f = state.faults();
    if f.corrupt_next > 0 && size > 0 {
        f.corrupt_next -= 1;
        state.counters.corrupted.fetch_add(1, Ordering::Relaxed);
        Some(size / 2)
    } else {
        None
    }
}

async fn content(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
) -> ApiResult<Response> {
    gate(&state, &headers)?;
    let fx = state.fixture();
    let f = fx.get(&id).ok_or_else(|| no_such_file(&id))?;
    if f.native.is_some() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "CLOUD_NATIVE_NO_CONTENT",
            id.clone(),
        ));
    }
    let r = f
        .revision(&rid)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "NO_SUCH_REVISION", rid.clone()))?;
    let corrupt = take_corruption(&state, r.size);
    Ok(stream_body(
        &state,
        Source::Keyed(fx.content(f, r)),
        r.size,
        corrupt,
    ))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    gate(&state, &headers)?;
    let fx = state.fixture();
    let f = fx.get(&id).ok_or_else(|| no_such_file(&id))?;
    if f.native.is_none() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "NOT_CLOUD_NATIVE",
            id.clone(),
        ));
    }
    let format = q.format.unwrap_or_else(|| "pdf".into());
    let bytes = fx.export(f, &format).ok_or_else(|| {
        ApiError(
            StatusCode::BAD_REQUEST,
            "EXPORT_FORMAT_UNSUPPORTED",
            format.clone(),
        )
    })?;
    let size = bytes.len() as u64;
    let corrupt = take_corruption(&state, size);
    Ok(stream_body(
        &state,
        Source::Memory(Bytes::from(bytes)),
        size,
        corrupt,
    ))
}

fn admin(state: &AppState) -> ApiResult<()> {
    if state.test_mode {
        Ok(())
    } else {
        Err(ApiError(
            StatusCode::NOT_FOUND,
            "NOT_FOUND",
            "admin endpoints require test mode".into(),
        ))
    }
}

async fn admin_seed(
    State(state): State<Shared>,
    Json(spec): Json<FixtureSpec>,
) -> ApiResult<Json<serde_json::Value>> {
    admin(&state)?;
    let max = state.max_files;
    let fx = tokio::task::spawn_blocking(move || Fixture::generate(spec, max))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, "FIXTURE_TOO_LARGE", e.to_string()))?;
    let summary = fx.summary();
    *state.fixture.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(fx);
    Ok(Json(serde_json::json!({
        "file_count": summary.file_count,
        "total_bytes": summary.total_bytes,
    })))
}

async fn admin_fault(
    State(state): State<Shared>,
    Json(req): Json<FaultRequest>,
) -> ApiResult<StatusCode> {
    admin(&state)?;
    let n = req.n.unwrap_or(1);
    match req.kind.as_str() {
        "EXPIRE_TOKENS" => state.auth().valid.clear(),
        "DROP_NEXT_N" => state.faults().drop_next = n,
        "TRUNCATE_PAGE" => state.faults().truncate_next_page = n,
        "CORRUPT_NEXT_N" => state.faults().corrupt_next = n,
        "CLEAR" => *state.faults() = Faults::default(),
        other => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                "BAD_FAULT_KIND",
                other.to_string(),
            ))
        }
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn admin_truth(State(state): State<Shared>) -> ApiResult<Response> {
    admin(&state)?;
    Ok(Json(state.fixture().summary()).into_response())
}

async fn admin_truth_file(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    admin(&state)?;
    let fx = state.fixture();
    let f = fx.get(&id).ok_or_else(|| no_such_file(&id))?;
    Ok(Json(fx.truth(f)).into_response())
}

async fn admin_stats(State(state): State<Shared>) -> ApiResult<Json<ServerStats>> {
    admin(&state)?;
    let c = &state.counters;
    Ok(Json(ServerStats {
        requests: c.requests.load(Ordering::Relaxed),
        listing_requests: c.listing_requests.load(Ordering::Relaxed),
        content_requests: c.content_requests.load(Ordering::Relaxed),
        bytes_served: c.bytes_served.load(Ordering::Relaxed),
        dropped: c.dropped.load(Ordering::Relaxed),
        corrupted: c.corrupted.load(Ordering::Relaxed),
    }))
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/about", get(about))
        .route("/oauth/authorize", get(authorize))
        .route("/oauth/token", post(token))
        .route("/files", get(list_files))
        .route("/files/{id}", get(file_detail))
        .route("/files/{id}/revisions", get(revisions))
        .route("/files/{id}/revisions/{rid}/content", get(content))
        .route("/files/{id}/export", get(export))
        .route("/admin/seed", post(admin_seed))
        .route("/admin/fault", post(admin_fault))
        .route("/admin/truth", get(admin_truth))
        .route("/admin/truth/{id}", get(admin_truth_file))
        .route("/admin/stats", get(admin_stats))
        .with_state(state)
}

pub struct SimServer;

impl SimServer {
    /// Generates the fixture, binds, and serves on a background runtime.
    pub fn start(config: SimConfig) -> Result<SimHandle, SimError> {
        let fixture = Fixture::generate(config.fixture.clone(), config.max_files)?;
        let addr_text = format!("{}:{}", config.host, config.port);
        let bind_err = |source| SimError::Bind {
            addr: addr_text.clone(),
            source,
        };
        let listener = StdListener::bind(&addr_text).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let addr = listener.local_addr().map_err(bind_err)?;

        let state = Arc::new(AppState {
            fixture: RwLock::new(Arc::new(fixture)),
            bucket: TokenBucket::from_config(&config.throttle).map(Arc::new),
            auth: Mutex::new(Auth {
                code_armed: false,
                issued: 0,
                valid: HashSet::new(),
            }),
            faults: Mutex::new(Faults::default()),
            counters: Counters::default(),
            test_mode: config.test_mode,
            max_files: config.max_files,
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .worker_threads(4)
            .build()
            .map_err(bind_err)?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state);
        let thread = std::thread::Builder::new()
            .name("simdrive".into())
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
            })
            .map_err(bind_err)?;
        Ok(SimHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }
}

/// Running simulator. Dropping it stops the server.
pub struct SimHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl SimHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for SimHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
