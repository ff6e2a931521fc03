//! HTTP service: JSON over `/api/v1`, every body shaped as
//! `{"ok": true, "data": ...}` or `{"ok": false, "error": {"code", "message"}}`.
//!
//! Users authenticate with `Authorization: Bearer <token>` from
//! `POST /api/v1/auth/login`; devices post batches with `X-Device-Key`.

pub mod error;
pub mod jobs;
pub mod routes;
pub mod state;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use sierra_core::auth::{AuthService, DEFAULT_SESSION_TTL_MS};
use sierra_core::model::DeviceId;
use sierra_core::store::crypto::MASTER_KEY_ENV;
use sierra_core::store::{MasterKey, Store, StoreError};
use sierra_core::viz::builtin_registry;

pub use routes::router;
pub use state::AppState;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub session_ttl_ms: i64,
    /// device key -> device it authenticates
    pub device_keys: HashMap<String, DeviceId>,
    /// Environment variable holding the hex master key.
    pub master_key_env: String,
}

impl ServiceConfig {
    pub fn new(addr: SocketAddr, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            addr,
            data_dir: data_dir.into(),
            session_ttl_ms: DEFAULT_SESSION_TTL_MS,
            device_keys: HashMap::new(),
            master_key_env: MASTER_KEY_ENV.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("address {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("cannot bind {0}: {1}")]
    Bind(SocketAddr, io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A running service. Dropping it leaves the server running until the
/// runtime shuts down; call [`ServiceHandle::shutdown`] to stop it cleanly.
pub struct ServiceHandle {
    addr: SocketAddr,
    state: AppState,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub async fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.state.store.close();
        match self.task.await {
            Ok(r) => r,
            Err(e) => Err(io::Error::other(e)),
        }
    }

    /// Runs until the server stops (it only stops through `shutdown`).
    pub async fn wait(self) -> io::Result<()> {
        self.task.await.map_err(io::Error::other)?
    }
}

/// Reads the master key from the environment named in `cfg`, then starts
/// the service.
pub async fn compose_service(cfg: ServiceConfig) -> Result<ServiceHandle, StartError> {
    let key = MasterKey::from_env(&cfg.master_key_env).map_err(|e| {
        StartError::ConfigError(format!("master key from ${}: {e}", cfg.master_key_env))
    })?;
    compose_service_with_key(cfg, key).await
}

pub async fn compose_service_with_key(cfg: ServiceConfig, key: MasterKey) -> Result<ServiceHandle, StartError> {
    if cfg.session_ttl_ms <= 0 {
        return Err(StartError::ConfigError("session TTL must be positive".into()));
    }
    let dir = &cfg.data_dir;
    std::fs::create_dir_all(dir)
        .and_then(|_| {
            let probe = dir.join(".write-probe");
            std::fs::write(&probe, b"")?;
            std::fs::remove_file(probe)
        })
        .map_err(|e| StartError::ConfigError(format!("data directory {} is not writable: {e}", dir.display())))?;

    let store = Store::open(dir, Some(key))?;
    let auth = AuthService::open(dir, cfg.session_ttl_ms)
        .map_err(|e| StartError::ConfigError(format!("loading users: {e}")))?;
    let state = AppState {
        store: Arc::new(store),
        auth: Arc::new(auth),
        registry: Arc::new(builtin_registry()),
        devices: Arc::new(cfg.device_keys.clone()),
        ml: Arc::default(),
    };

    let listener = TcpListener::bind(cfg.addr).await.map_err(|e| {
        if e.kind() == io::ErrorKind::AddrInUse {
            StartError::PortInUse(cfg.addr)
        } else {
            StartError::Bind(cfg.addr, e)
        }
    })?;
    let addr = listener.local_addr().map_err(|e| StartError::Bind(cfg.addr, e))?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    tracing::info!("listening on {addr}");
    Ok(ServiceHandle {
        addr,
        state,
        stop: Some(stop),
        task,
    })
}
