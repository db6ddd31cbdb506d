//! HTTP API over sessions, executions and metrics, with a server-sent
//! event stream per execution. See `docs/API.md` for the record formats.

mod error;
mod executions;
mod idempotency;
mod metrics;
mod sessions;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use moaplan_core::moa::AgentRegistry;

use crate::config::Config;
use crate::providers::ProviderSet;
use crate::store::SessionStore;

pub use error::ApiError;
pub use executions::{ExecutionMode, ExecutionRequest, ProfileRef, Record, Terminal};
pub use sessions::{PendingQuestion, SessionSummary};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

pub struct AppState {
    pub store: SessionStore,
    pub config: Config,
    pub registry: Option<AgentRegistry>,
    pub providers: ProviderSet,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    executions: Mutex<HashMap<String, Arc<executions::Execution>>>,
    idempotency: idempotency::Cache,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>, config: Config, providers: ProviderSet) -> anyhow::Result<Self> {
        let data_dir = data_dir.into();
        Ok(AppState {
            store: SessionStore::open(data_dir.join("sessions"))?,
            registry: config.registry()?,
            config,
            providers,
            session_locks: Mutex::default(),
            executions: Mutex::default(),
            idempotency: idempotency::Cache::default(),
        })
    }

    /// Operations on one session run one at a time.
    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.session_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route(
            "/health",
            get(|| async { axum::Json(serde_json::json!({ "status": "ok" })) }),
        )
        .route("/sessions", post(sessions::create).get(sessions::list))
        .route("/sessions/{id}", get(sessions::get))
        .route("/sessions/{id}/advance", post(sessions::advance))
        .route("/sessions/{id}/pending", get(sessions::pending))
        .route("/sessions/{id}/answers", post(sessions::answers))
        .route("/sessions/{id}/finalize", post(sessions::finalize))
        .route("/sessions/{id}/tree", get(sessions::tree))
        .route("/executions", post(executions::start).get(executions::list))
        .route("/executions/{id}", get(executions::get))
        .route("/executions/{id}/events", get(executions::events))
        .route("/eval/ted", post(metrics::ted))
        .route("/eval/sim", post(metrics::sim))
        .route("/eval/compare", post(metrics::compare))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
