//! Seeded legitimate agent traffic.

use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use ztrv_core::clock::duration_to_millis_ceil;
use ztrv_core::{
    issue_mandate, ExecutionContext, IssuerKey, PaymentPayload, StaticKeystore, Timestamp,
    VerificationRequest,
};

use crate::clock::VIRTUAL_EPOCH;

/// Operations legitimate agents request.
pub const SCOPES: [&str; 3] = ["checkout", "payment", "subscription"];
const CURRENCIES: [&str; 4] = ["USD", "EUR", "GBP", "JPY"];

/// Delay between issuance and the agent presenting the mandate.
pub const SUBMIT_LATENCY: Duration = Duration::from_millis(2);

pub const ISSUER_KEY_ID: &str = "sim-issuer";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadParams {
    /// Requests per second.
    pub rate: u64,
    pub duration: Duration,
    pub n_agents: usize,
    pub n_merchants: usize,
    pub seed: u64,
    /// Issue time of the first request.
    pub start: Timestamp,
}

impl WorkloadParams {
    pub fn new(rate: u64, duration: Duration, seed: u64) -> Self {
        Self {
            rate,
            duration,
            n_agents: 32,
            n_merchants: 8,
            seed,
            start: VIRTUAL_EPOCH,
        }
    }

    /// A stream of exactly `n` requests spread over `n` milliseconds.
    pub fn with_count(n: u64, seed: u64) -> Self {
        Self::new(1000, Duration::from_millis(n), seed)
    }

    pub fn request_count(&self) -> u64 {
        let ms = u128::from(self.rate) * self.duration.as_millis() / 1000;
        u64::try_from(ms).unwrap_or(u64::MAX)
    }
}

/// A legitimately issued request and when its agent submits it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegitRequest {
    pub submit_at: Timestamp,
    pub request: VerificationRequest,
}

/// Generated traffic plus the issuer material needed to verify it.
#[derive(Debug, Clone)]
pub struct Workload {
    pub params: WorkloadParams,
    pub issuer: IssuerKey,
    pub keystore: Arc<StaticKeystore>,
    pub requests: Vec<LegitRequest>,
}

/// Emits `rate × duration` freshly issued requests, each bound to its own
/// context (unique task id, agent and merchant drawn from seeded pools),
/// issue times evenly spaced across the duration.
pub fn gen_legit_workload(params: &WorkloadParams) -> Workload {
    assert!(params.rate > 0 && !params.duration.is_zero(), "rate and duration must be positive");
    assert!(params.n_agents > 0 && params.n_merchants > 0, "agent and merchant pools must be non-empty");

    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let issuer = IssuerKey::generate(ISSUER_KEY_ID, &mut rng);
    let keystore = Arc::new(StaticKeystore::new().with_key(ISSUER_KEY_ID, issuer.public_key()));

    let count = params.request_count();
    let span_ms = duration_to_millis_ceil(params.duration);
    let requests = (0..count)
        .map(|i| {
            let offset = i128::from(i) * i128::from(span_ms) / i128::from(count);
            let issued_at = Timestamp::from_millis(params.start.as_millis() + offset as i64);
            let ctx = ExecutionContext::new(
                format!("task-{i:08}"),
                format!("agent-{:04}", rng.gen_range(0..params.n_agents)),
                format!("merchant-{:03}", rng.gen_range(0..params.n_merchants)),
                SCOPES[rng.gen_range(0..SCOPES.len())],
            );
            let payload = PaymentPayload::new(
                rng.gen_range(100..=500_000),
                CURRENCIES[rng.gen_range(0..CURRENCIES.len())],
            );
            let mandate = issue_mandate(&issuer, &ctx, payload, issued_at, &mut rng);
            LegitRequest {
                submit_at: issued_at.saturating_add(SUBMIT_LATENCY),
                request: VerificationRequest::new(mandate, ctx),
            }
        })
        .collect();

    Workload {
        params: params.clone(),
        issuer,
        keystore,
        requests,
    }
}
