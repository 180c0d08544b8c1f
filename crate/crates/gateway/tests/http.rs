use std::net::SocketAddr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use tokio::net::TcpListener;
use ztrv_core::{
    issue_mandate, Clock, Decision, ExecutionContext, IssuerKey, Mode, PaymentPayload, Reason, StaticKeystore,
    SystemClock, VerificationRequest,
};
use ztrv_gateway::{load_config, Gateway, GatewayConfig, MockMerchant, FULFILL_PATH};

struct Harness {
    base: String,
    merchant: MockMerchant,
    issuer: IssuerKey,
    client: reqwest::Client,
    clock: Arc<SystemClock>,
    rng: ChaCha20Rng,
}

async fn spawn(router: axum::Router) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    addr
}

fn config(mode: Mode, upstream: String) -> GatewayConfig {
    let text = format!(r#"{{"upstream_url": "{upstream}", "keystore_path": "unused.json", "mode": "{}"}}"#, mode.as_str());
    GatewayConfig::from_json(&text, std::path::Path::new(".")).unwrap()
}

async fn harness_with_upstream(mode: Mode, upstream: Option<String>) -> Harness {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let issuer = IssuerKey::generate("gw-issuer", &mut rng);
    let keystore = Arc::new(StaticKeystore::new().with_key("gw-issuer", issuer.public_key()));
    let merchant = MockMerchant::default();
    let upstream = match upstream {
        Some(u) => u,
        None => format!("http://{}{FULFILL_PATH}", spawn(merchant.router()).await),
    };
    let clock = Arc::new(SystemClock::new());
    let gateway = Gateway::new(&config(mode, upstream), keystore, clock.clone()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(gateway.serve(listener, std::future::pending()));
    Harness {
        base: format!("http://{addr}"),
        merchant,
        issuer,
        client: reqwest::Client::new(),
        clock,
        rng,
    }
}

async fn harness(mode: Mode) -> Harness {
    harness_with_upstream(mode, None).await
}

impl Harness {
    fn request(&mut self, task: &str) -> VerificationRequest {
        let ctx = ExecutionContext::new(task, "agent-0001", "merchant-001", "checkout");
        let mandate = issue_mandate(&self.issuer, &ctx, PaymentPayload::new(4999, "USD"), self.clock.now(), &mut self.rng);
        VerificationRequest::new(mandate, ctx)
    }

    async fn post(&self, body: impl Into<reqwest::Body>) -> (u16, Value) {
        let resp = self
            .client
            .post(format!("{}/execute", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap())
    }

    async fn execute(&self, req: &VerificationRequest) -> (u16, Value) {
        self.post(serde_json::to_vec(req).unwrap()).await
    }
}

fn reason(body: &Value) -> Reason {
    serde_json::from_value::<Decision>(body.clone()).unwrap().reason()
}

#[tokio::test]
async fn valid_request_is_relayed() {
    let mut h = harness(Mode::Full).await;
    let req = h.request("task-1");
    let (status, body) = h.execute(&req).await;
    assert_eq!(status, 200);
    assert_eq!(body["fulfilled"], req.mandate.mandate_id.as_str());
    let ledger = h.merchant.ledger();
    assert_eq!(ledger.len(), 1);
    assert_eq!(ledger[0].context.as_ref(), Some(&req.context));
}

#[tokio::test]
async fn replay_is_forbidden_and_never_forwarded() {
    let mut h = harness(Mode::Full).await;
    let req = h.request("task-2");
    assert_eq!(h.execute(&req).await.0, 200);
    let (status, body) = h.execute(&req).await;
    assert_eq!(status, 403);
    assert_eq!(body["outcome"], "REJECT");
    assert_eq!(reason(&body), Reason::ReplayDetected);
    assert_eq!(body["mandate_id"], req.mandate.mandate_id.as_str());
    assert_eq!(h.merchant.len(), 1);
}

#[tokio::test]
async fn malformed_bodies_fail_closed() {
    let mut h = harness(Mode::Full).await;
    let full = serde_json::to_vec(&h.request("task-3")).unwrap();
    let (status, body) = h.post(full[..full.len() / 2].to_vec()).await;
    assert_eq!((status, reason(&body)), (403, Reason::MalformedRequest));

    let (status, body) = h.post(vec![b' '; 70 * 1024]).await;
    assert_eq!((status, reason(&body)), (403, Reason::MalformedRequest));

    let (status, body) = h.post("{}").await;
    assert_eq!((status, reason(&body)), (403, Reason::MalformedRequest));
    assert!(h.merchant.is_empty());
}

#[tokio::test]
async fn context_mismatch_leaves_ledger_untouched() {
    let mut h = harness(Mode::Full).await;
    let mut req = h.request("task-4");
    req.context.merchant_id = "merchant-evil".into();
    let (status, body) = h.execute(&req).await;
    assert_eq!((status, reason(&body)), (403, Reason::ContextMismatch));
    assert!(h.merchant.is_empty());
}

async fn storm(mode: Mode) -> (usize, usize) {
    let mut h = harness(mode).await;
    let req = h.request("task-storm");
    let body = serde_json::to_vec(&req).unwrap();
    let h = Arc::new(h);
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let (h, body) = (h.clone(), body.clone());
            tokio::spawn(async move { h.post(body).await.0 })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        if t.await.unwrap() == 200 {
            ok += 1;
        }
    }
    (ok, h.merchant.count(&req.mandate.mandate_id))
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn replay_storm_full_mode_reaches_ledger_once() {
    assert_eq!(storm(Mode::Full).await, (1, 1));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn replay_storm_baseline_reaches_ledger_every_time() {
    assert_eq!(storm(Mode::Baseline).await, (100, 100));
}

#[tokio::test]
async fn upstream_failure_is_502_and_nonce_stays_consumed() {
    let dead = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap();
    let mut h = harness_with_upstream(Mode::Full, Some(format!("http://{dead}{FULFILL_PATH}"))).await;
    let req = h.request("task-5");
    let (status, body) = h.execute(&req).await;
    assert_eq!((status, reason(&body)), (502, Reason::Authorized));
    let (status, body) = h.execute(&req).await;
    assert_eq!((status, reason(&body)), (403, Reason::ReplayDetected));
}

#[tokio::test]
async fn health_and_stats() {
    let mut h = harness(Mode::Full).await;
    let health = h.client.get(format!("{}/healthz", h.base)).send().await.unwrap();
    assert_eq!(health.status().as_u16(), 200);
    assert_eq!(health.text().await.unwrap(), "ok");
    let req = h.request("task-6");
    h.execute(&req).await;
    let stats: Value = h.client.get(format!("{}/stats", h.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["live_count"], 1);
    assert_eq!(stats["bytes_estimate"], 125);
}

#[tokio::test]
async fn gateway_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let issuer = IssuerKey::generate("file-issuer", &mut rng);
    let keystore = StaticKeystore::new().with_key("file-issuer", issuer.public_key());
    std::fs::write(dir.path().join("keys.json"), keystore.to_json()).unwrap();
    let cfg = dir.path().join("gateway.json");
    std::fs::write(&cfg, r#"{"upstream_url": "http://127.0.0.1:1/fulfill", "keystore_path": "keys.json", "window": 30}"#).unwrap();
    let config = load_config(&cfg).unwrap();
    assert_eq!(config.verifier.window.as_secs(), 30);
    let gw = Gateway::from_config(&config).unwrap();
    assert_eq!(gw.stats().live_count, 0);

    std::fs::write(dir.path().join("keys.json"), "{}").unwrap();
    assert!(Gateway::from_config(&config).is_err());
}
