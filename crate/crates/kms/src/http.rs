//! REST front end of one server.
//!
//! Key delivery follows ETSI GS QKD 014 paths (`/api/v1/keys/{SAE_ID}/...`). Side A answers
//! `enc_keys` only after side B has accepted the mirrored allocation, so a key handed to the
//! master SAE is always resolvable on the slave side. Peer and admin routes are extras for
//! the simulator.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::Deserialize;
use tokio::sync::{oneshot, Mutex};
use uuid::Uuid;

use crate::api::{
    CreditRequest, CreditResponse, ErrorBody, KeyContainer, KeyEntry, KeyIdsRequest, KeyRequest, MirrorRequest,
    StatusResponse, TimeRequest, DEFAULT_KEY_SIZE_BITS, MAX_KEY_PER_REQUEST, MAX_KEY_SIZE_BITS, MIN_KEY_SIZE_BITS,
};
use crate::error::KmsError;
use crate::ledger::{LedgerState, Role};
use crate::server::{KeyBlock, KeyServer, PendingKey, Result, ServerConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    pub server: ServerConfig,
    pub bind: SocketAddr,
    /// Base URL of the peer server; side A without a peer runs standalone.
    pub peer_url: Option<String>,
    pub local_sae: String,
    pub peer_sae: String,
}

impl HttpConfig {
    pub fn new(server: ServerConfig) -> Self {
        let (local_sae, peer_sae) = match server.role {
            Role::A => ("sae-a", "sae-b"),
            Role::B => ("sae-b", "sae-a"),
        };
        Self {
            server,
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            peer_url: None,
            local_sae: local_sae.into(),
            peer_sae: peer_sae.into(),
        }
    }

    pub fn bind(mut self, addr: SocketAddr) -> Self {
        self.bind = addr;
        self
    }

    pub fn peer(mut self, url: impl Into<String>) -> Self {
        self.peer_url = Some(url.into());
        self
    }
}

struct AppState {
    server: Mutex<KeyServer>,
    clock_ns: AtomicU64,
    peer_url: RwLock<Option<String>>,
    client: reqwest::Client,
    local_sae: String,
    peer_sae: String,
}

impl AppState {
    fn stamp(&self, t_ns: Option<u64>) -> u64 {
        match t_ns {
            Some(t) => self.clock_ns.fetch_max(t, Ordering::SeqCst).max(t),
            None => self.clock_ns.load(Ordering::SeqCst),
        }
    }

    fn check_sae(&self, sae: &str) -> Result<()> {
        if sae == self.peer_sae {
            Ok(())
        } else {
            Err(KmsError::Malformed(format!("unknown SAE `{sae}`")))
        }
    }

    async fn forward(&self, req: &MirrorRequest) -> Result<()> {
        let Some(base) = self.peer_url.read().unwrap_or_else(|p| p.into_inner()).clone() else {
            return Ok(());
        };
        let resp = self
            .client
            .post(format!("{base}/api/v1/peer/mirror"))
            .json(req)
            .send()
            .await
            .map_err(|e| KmsError::PeerUnavailable(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(());
        }
        let status = resp.status();
        match resp.json::<ErrorBody>().await {
            Ok(body) => Err(body.into_error()),
            Err(_) => Err(KmsError::PeerUnavailable(format!("peer answered {status}"))),
        }
    }
}

struct ApiError(KmsError);

impl From<KmsError> for ApiError {
    fn from(e: KmsError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(KmsError::Malformed(e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(KmsError::Malformed(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn container(blocks: Vec<KeyBlock>) -> KeyContainer {
    KeyContainer {
        keys: blocks
            .into_iter()
            .map(|b| KeyEntry {
                key_id: b.key_id,
                key: B64.encode(&b.key),
            })
            .collect(),
    }
}

fn check_request(req: &KeyRequest) -> Result<()> {
    if req.number == 0 || req.number > MAX_KEY_PER_REQUEST {
        return Err(KmsError::Malformed(format!("number must be in 1..={MAX_KEY_PER_REQUEST}")));
    }
    if req.size < MIN_KEY_SIZE_BITS || req.size > MAX_KEY_SIZE_BITS || !req.size.is_multiple_of(8) {
        return Err(KmsError::Malformed(format!(
            "size must be a multiple of 8 in {MIN_KEY_SIZE_BITS}..={MAX_KEY_SIZE_BITS}"
        )));
    }
    Ok(())
}

async fn enc_keys(st: &AppState, sae: &str, req: KeyRequest) -> ApiResult<KeyContainer> {
    st.check_sae(sae)?;
    check_request(&req)?;
    let mut server = st.server.lock().await;
    if server.role() != Role::A {
        return Err(KmsError::Malformed("enc_keys is served by the master side only".into()).into());
    }
    let pending = server.prepare_batch(req.number, req.size)?;
    let t = st.stamp(None);
    let mirror = MirrorRequest {
        from: server.role(),
        t_ns: t,
        keys: pending.iter().copied().map(Into::into).collect(),
    };
    // The lock stays held so no other allocation can claim the same offsets meanwhile.
    st.forward(&mirror).await?;
    let blocks = pending
        .iter()
        .map(|p| server.commit_issue(t, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Json(container(blocks)))
}

async fn post_enc_keys(
    State(st): State<Arc<AppState>>,
    Path(sae): Path<String>,
    body: std::result::Result<Json<KeyRequest>, JsonRejection>,
) -> ApiResult<KeyContainer> {
    let Json(req) = body?;
    enc_keys(&st, &sae, req).await
}

async fn get_enc_keys(
    State(st): State<Arc<AppState>>,
    Path(sae): Path<String>,
    query: std::result::Result<Query<KeyRequest>, QueryRejection>,
) -> ApiResult<KeyContainer> {
    let Query(req) = query?;
    enc_keys(&st, &sae, req).await
}

async fn dec_keys(st: &AppState, sae: &str, ids: Vec<Uuid>) -> ApiResult<KeyContainer> {
    st.check_sae(sae)?;
    if ids.is_empty() || ids.len() as u64 > MAX_KEY_PER_REQUEST {
        return Err(KmsError::Malformed(format!("between 1 and {MAX_KEY_PER_REQUEST} key IDs required")).into());
    }
    let mut server = st.server.lock().await;
    server.check_fetchable(&ids)?;
    let t = st.stamp(None);
    let blocks = ids.iter().map(|id| server.fetch(t, *id)).collect::<Result<Vec<_>>>()?;
    Ok(Json(container(blocks)))
}

async fn post_dec_keys(
    State(st): State<Arc<AppState>>,
    Path(sae): Path<String>,
    body: std::result::Result<Json<KeyIdsRequest>, JsonRejection>,
) -> ApiResult<KeyContainer> {
    let Json(req) = body?;
    dec_keys(&st, &sae, req.key_ids.into_iter().map(|e| e.key_id).collect()).await
}

#[derive(Deserialize)]
struct KeyIdQuery {
    #[serde(rename = "key_ID")]
    key_id: Uuid,
}

async fn get_dec_keys(
    State(st): State<Arc<AppState>>,
    Path(sae): Path<String>,
    query: std::result::Result<Query<KeyIdQuery>, QueryRejection>,
) -> ApiResult<KeyContainer> {
    let Query(q) = query?;
    dec_keys(&st, &sae, vec![q.key_id]).await
}

async fn status(State(st): State<Arc<AppState>>, Path(sae): Path<String>) -> ApiResult<StatusResponse> {
    st.check_sae(&sae)?;
    let server = st.server.lock().await;
    let s = server.state();
    let (master, slave, source, target) = match server.role() {
        Role::A => (&st.local_sae, &st.peer_sae, "kme-a", "kme-b"),
        Role::B => (&st.peer_sae, &st.local_sae, "kme-b", "kme-a"),
    };
    Ok(Json(StatusResponse {
        source_KME_ID: source.into(),
        target_KME_ID: target.into(),
        master_SAE_ID: master.clone(),
        slave_SAE_ID: slave.clone(),
        key_size: DEFAULT_KEY_SIZE_BITS,
        stored_key_count: s.available_bits / DEFAULT_KEY_SIZE_BITS,
        max_key_count: u64::MAX / DEFAULT_KEY_SIZE_BITS,
        max_key_per_request: MAX_KEY_PER_REQUEST,
        max_key_size: MAX_KEY_SIZE_BITS,
        min_key_size: MIN_KEY_SIZE_BITS,
        max_SAE_ID_count: 0,
        available_bits: s.available_bits,
        credited_bits: s.credited_bits,
        debited_bits: s.debited_bits,
        failed: s.failed,
    }))
}

async fn peer_mirror(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<MirrorRequest>, JsonRejection>,
) -> ApiResult<LedgerSummary> {
    let Json(req) = body?;
    let mut server = st.server.lock().await;
    if req.from != server.role().peer() {
        return Err(KmsError::Desync(format!("mirror from {} reached a {} server", req.from, server.role())).into());
    }
    let t = st.stamp(Some(req.t_ns));
    let keys: Vec<PendingKey> = req.keys.into_iter().map(Into::into).collect();
    server.mirror_batch(t, req.from, &keys)?;
    Ok(Json(LedgerSummary::of(server.state())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct LedgerSummary {
    pub available_bits: u64,
    pub events: u64,
}

impl LedgerSummary {
    fn of(s: &LedgerState) -> Self {
        Self {
            available_bits: s.available_bits,
            events: s.events,
        }
    }
}

async fn admin_credit(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<CreditRequest>, JsonRejection>,
) -> ApiResult<CreditResponse> {
    let Json(req) = body?;
    let mut server = st.server.lock().await;
    let t = st.stamp(req.t_ns);
    let credited = server.credit(t, req.bits)?;
    Ok(Json(CreditResponse {
        credited,
        available_bits: server.available_bits(),
    }))
}

fn time_body(body: std::result::Result<Json<TimeRequest>, JsonRejection>) -> std::result::Result<TimeRequest, ApiError> {
    match body {
        Ok(Json(req)) => Ok(req),
        Err(JsonRejection::MissingJsonContentType(_)) => Ok(TimeRequest::default()),
        Err(e) => Err(e.into()),
    }
}

async fn admin_fail(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<TimeRequest>, JsonRejection>,
) -> ApiResult<LedgerSummary> {
    let req = time_body(body)?;
    let mut server = st.server.lock().await;
    server.inject_failure(st.stamp(req.t_ns))?;
    Ok(Json(LedgerSummary::of(server.state())))
}

async fn admin_restore(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<TimeRequest>, JsonRejection>,
) -> ApiResult<LedgerSummary> {
    let req = time_body(body)?;
    let mut server = st.server.lock().await;
    server.restore(st.stamp(req.t_ns))?;
    Ok(Json(LedgerSummary::of(server.state())))
}

async fn admin_clock(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<TimeRequest>, JsonRejection>,
) -> ApiResult<TimeRequest> {
    let req = time_body(body)?;
    Ok(Json(TimeRequest {
        t_ns: Some(st.stamp(req.t_ns)),
    }))
}

async fn admin_ledger(State(st): State<Arc<AppState>>) -> ApiResult<LedgerState> {
    Ok(Json(st.server.lock().await.state().clone()))
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/keys/{sae}/enc_keys", post(post_enc_keys).get(get_enc_keys))
        .route("/api/v1/keys/{sae}/dec_keys", post(post_dec_keys).get(get_dec_keys))
        .route("/api/v1/keys/{sae}/status", get(status))
        .route("/api/v1/peer/mirror", post(peer_mirror))
        .route("/api/v1/admin/credit", post(admin_credit))
        .route("/api/v1/admin/fail", post(admin_fail))
        .route("/api/v1/admin/restore", post(admin_restore))
        .route("/api/v1/admin/clock", post(admin_clock))
        .route("/api/v1/admin/ledger", get(admin_ledger))
        .with_state(state)
}

fn app_state(cfg: &HttpConfig) -> Result<Arc<AppState>> {
    let server = KeyServer::open(cfg.server.clone())?;
    let clock = server.state().last_timestamp_ns;
    let client = reqwest::Client::builder()
        .timeout(std::time::Duration::from_secs(10))
        .build()
        .map_err(|e| KmsError::Io(e.to_string()))?;
    Ok(Arc::new(AppState {
        server: Mutex::new(server),
        clock_ns: AtomicU64::new(clock),
        peer_url: RwLock::new(cfg.peer_url.clone()),
        client,
        local_sae: cfg.local_sae.clone(),
        peer_sae: cfg.peer_sae.clone(),
    }))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(KmsError::from)
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set_peer(&self, url: impl Into<String>) {
        *self.state.peer_url.write().unwrap_or_else(|p| p.into_inner()) = Some(url.into());
    }

    /// Stops accepting requests, finishes in-flight ones and joins the thread.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds synchronously (so the address is known on return) and serves in the background.
pub fn spawn(cfg: HttpConfig) -> Result<ServerHandle> {
    let state = app_state(&cfg)?;
    let listener = std::net::TcpListener::bind(cfg.bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let rt = runtime()?;
    let thread = std::thread::Builder::new()
        .name(format!("kms-{}", cfg.server.role))
        .spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })?;
    Ok(ServerHandle {
        addr,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves in the foreground until interrupted.
pub fn serve(cfg: HttpConfig) -> Result<()> {
    let state = app_state(&cfg)?;
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
        eprintln!("kms {} listening on http://{}", cfg.server.role, listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
