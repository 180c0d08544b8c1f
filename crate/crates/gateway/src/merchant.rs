//! A stand-in merchant backend that records every fulfilled mandate.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use ztrv_core::{Clock, ExecutionContext, SystemClock, Timestamp};

pub const FULFILL_PATH: &str = "/fulfill";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mandate_id: String,
    pub context: Option<ExecutionContext>,
    pub received_at: Timestamp,
}

/// Append-only ledger shared with the handler.
#[derive(Clone)]
pub struct MockMerchant {
    ledger: Arc<Mutex<Vec<LedgerEntry>>>,
    clock: Arc<dyn Clock>,
}

impl Default for MockMerchant {
    fn default() -> Self {
        Self::new(Arc::new(SystemClock::new()))
    }
}

impl MockMerchant {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            ledger: Arc::default(),
            clock,
        }
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.ledger.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.ledger.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, mandate_id: &str) -> usize {
        self.ledger.lock().iter().filter(|e| e.mandate_id == mandate_id).count()
    }

    /// `POST /fulfill`.
    pub fn router(&self) -> Router {
        Router::new().route(FULFILL_PATH, post(fulfill)).with_state(self.clone())
    }

    /// Serves the ledger endpoint on `listener` until the task is dropped.
    pub async fn serve(self, listener: TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }

    fn record(&self, body: &[u8]) -> String {
        let parsed: Value = serde_json::from_slice(body).unwrap_or(Value::Null);
        let mandate_id = parsed["mandate"]["mandate_id"].as_str().unwrap_or_default().to_owned();
        let context = serde_json::from_value(parsed["context"].clone()).ok();
        self.ledger.lock().push(LedgerEntry {
            mandate_id: mandate_id.clone(),
            context,
            received_at: self.clock.now(),
        });
        mandate_id
    }
}

async fn fulfill(State(merchant): State<MockMerchant>, body: Bytes) -> Json<Value> {
    let id = merchant.record(&body);
    Json(json!({ "fulfilled": id }))
}
