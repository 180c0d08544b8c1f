use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reqwest::Url;
use thiserror::Error;
use tokio::net::TcpListener;
use ztrv_core::{
    Clock, Decision, KeyError, Keystore, NonceRegistry, NonceStore, Reason, RegistryStats, StaticKeystore,
    SystemClock, Verifier,
};

use crate::config::GatewayConfig;

pub const DECISION_HEADER: &str = "x-ztrv-decision";
pub const SWEEP_INTERVAL: Duration = Duration::from_millis(250);

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("keystore {path}: {source}")]
    Keystore { path: String, source: KeyError },
    #[error(transparent)]
    Config(#[from] ztrv_core::ConfigError),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Verifier, registry and upstream client shared by every handler.
#[derive(Clone)]
pub struct Gateway {
    verifier: Verifier,
    registry: Arc<NonceRegistry>,
    clock: Arc<dyn Clock>,
    client: reqwest::Client,
    upstream: Url,
    body_limit: usize,
}

impl Gateway {
    pub fn new(config: &GatewayConfig, keystore: Arc<dyn Keystore>, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        let registry = Arc::new(NonceRegistry::with_entry_bytes(config.per_entry_bytes));
        let verifier = Verifier::new(config.verifier.clone(), registry.clone(), keystore)?;
        let client = reqwest::Client::builder().timeout(Duration::from_secs(10)).build()?;
        Ok(Self {
            verifier,
            registry,
            clock,
            client,
            upstream: config.upstream_url.clone(),
            body_limit: config.request_body_limit,
        })
    }

    /// Loads the keystore named in `config` and uses the system clock.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let keystore = StaticKeystore::load(&config.keystore_path).map_err(|source| GatewayError::Keystore {
            path: config.keystore_path.display().to_string(),
            source,
        })?;
        Self::new(config, Arc::new(keystore), Arc::new(SystemClock::new()))
    }

    pub fn stats(&self) -> RegistryStats {
        self.registry.stats()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/execute", post(execute))
            .route("/stats", get(stats))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(self.clone())
    }

    /// Serves until `shutdown` resolves, sweeping the registry in the background.
    pub async fn serve(self, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let sweeper = {
            let (registry, clock) = (self.registry.clone(), self.clock.clone());
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(SWEEP_INTERVAL);
                loop {
                    tick.tick().await;
                    registry.sweep(clock.now());
                }
            })
        };
        let result = axum::serve(listener, self.router()).with_graceful_shutdown(shutdown).await;
        sweeper.abort();
        result
    }

    async fn handle(&self, body: Body) -> Response {
        let decision = match to_bytes(body, self.body_limit).await {
            Ok(bytes) => {
                let decision = self.verifier.verify_json(&bytes, self.clock.now());
                if decision.is_accept() {
                    return self.forward(bytes, decision).await;
                }
                decision
            }
            Err(_) => Decision::new(Reason::MalformedRequest, ""),
        };
        tracing::debug!(reason = %decision.reason().as_str(), mandate_id = decision.mandate_id(), "rejected");
        decision_response(StatusCode::FORBIDDEN, &decision)
    }

    async fn forward(&self, body: Bytes, decision: Decision) -> Response {
        let sent = self
            .client
            .post(self.upstream.clone())
            .header(header::CONTENT_TYPE, "application/json")
            .header(DECISION_HEADER, "ACCEPT")
            .body(body)
            .send()
            .await;
        let upstream = match sent {
            Ok(resp) => resp,
            Err(err) => {
                tracing::warn!(%err, mandate_id = decision.mandate_id(), "upstream unreachable after accept");
                return decision_response(StatusCode::BAD_GATEWAY, &decision);
            }
        };
        let status = StatusCode::from_u16(upstream.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
        let content_type = upstream.headers().get(header::CONTENT_TYPE).cloned();
        match upstream.bytes().await {
            Ok(bytes) => {
                let mut resp = (status, bytes).into_response();
                if let Some(ct) = content_type.and_then(|v| HeaderValue::from_bytes(v.as_bytes()).ok()) {
                    resp.headers_mut().insert(header::CONTENT_TYPE, ct);
                }
                resp
            }
            Err(err) => {
                tracing::warn!(%err, mandate_id = decision.mandate_id(), "upstream body lost after accept");
                decision_response(StatusCode::BAD_GATEWAY, &decision)
            }
        }
    }
}

fn decision_response(status: StatusCode, decision: &Decision) -> Response {
    (status, Json(decision)).into_response()
}

async fn execute(State(gw): State<Gateway>, request: Request) -> Response {
    gw.handle(request.into_body()).await
}

async fn stats(State(gw): State<Gateway>) -> Json<RegistryStats> {
    Json(gw.stats())
}
