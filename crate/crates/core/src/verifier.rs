//! The fail-closed runtime verification pipeline.
//!
//! Stages run in a fixed order and stop at the first failure:
//!
//! 1. parse: structural checks on mandate and context
//! 2. signature: keystore lookup by `key_id`, then signature verification
//! 3. freshness: age against the window, widened by the skew tolerance
//! 4. context binding: recompute the context hash and compare (modes
//!    [`Mode::ContextOnly`] and [`Mode::Full`])
//! 5. consumption: atomic set-if-absent of the nonce (modes
//!    [`Mode::NonceOnly`] and [`Mode::Full`])
//!
//! Only stage 5 mutates state, so any rejection from stages 1–4 leaves the
//! registry untouched.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clock::{duration_to_millis_ceil, Timestamp};
use crate::keys::Keystore;
use crate::mandate::{compute_context_hash_over, verify_signature, ContextField, VerificationRequest};
use crate::registry::NonceStore;

/// Which runtime checks are enforced on top of signature and freshness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Baseline,
    #[serde(alias = "context_only")]
    ContextOnly,
    #[serde(alias = "nonce_only")]
    NonceOnly,
    #[default]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::ContextOnly, Mode::NonceOnly, Mode::Full];

    pub fn enforces_context(self) -> bool {
        matches!(self, Mode::ContextOnly | Mode::Full)
    }

    pub fn enforces_nonce(self) -> bool {
        matches!(self, Mode::NonceOnly | Mode::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::ContextOnly => "context-only",
            Mode::NonceOnly => "nonce-only",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "context-only" | "context_only" => Ok(Mode::ContextOnly),
            "nonce-only" | "nonce_only" => Ok(Mode::NonceOnly),
            "full" => Ok(Mode::Full),
            other => Err(format!(
                "unknown mode `{other}` (expected baseline, context-only, nonce-only or full)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("`window` must be greater than zero")]
    ZeroWindow,
    #[error("`context_fields` must not be empty when mode `{0}` enforces context binding")]
    NoContextFields(Mode),
}

/// Verifier policy. Durations are whole seconds in serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierConfig {
    #[serde(default)]
    pub mode: Mode,
    /// Freshness window, also the base nonce retention.
    #[serde(default = "default_window", with = "whole_secs")]
    pub window: Duration,
    #[serde(default, with = "whole_secs")]
    pub skew_tolerance: Duration,
    #[serde(default = "default_context_fields")]
    pub context_fields: Vec<ContextField>,
}

pub const DEFAULT_WINDOW: Duration = Duration::from_secs(60);

fn default_window() -> Duration {
    DEFAULT_WINDOW
}

fn default_context_fields() -> Vec<ContextField> {
    ContextField::DEFAULT_BINDING.to_vec()
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            window: DEFAULT_WINDOW,
            skew_tolerance: Duration::ZERO,
            context_fields: default_context_fields(),
        }
    }
}

impl VerifierConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window.is_zero() {
            return Err(ConfigError::ZeroWindow);
        }
        if self.mode.enforces_context() && self.context_fields.is_empty() {
            return Err(ConfigError::NoContextFields(self.mode));
        }
        Ok(())
    }

    /// How long a consumed nonce is retained.
    ///
    /// At least the window, and always long enough that the entry outlives
    /// the mandate's own freshness (`issued_at + window + skew`), so a replay
    /// is rejected either by the registry or by the freshness check.
    pub fn nonce_ttl(&self, issued_at: Timestamp, now: Timestamp) -> Duration {
        let window = duration_to_millis_ceil(self.window);
        let stale_at = i128::from(issued_at.as_millis())
            + i128::from(window)
            + i128::from(duration_to_millis_ceil(self.skew_tolerance))
            + 1;
        let until_stale = stale_at - i128::from(now.as_millis());
        let ms = until_stale.max(i128::from(window));
        Duration::from_millis(u64::try_from(ms).unwrap_or(u64::MAX))
    }
}

mod whole_secs {
    use super::*;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "ACCEPT")]
    Accept,
    #[serde(rename = "REJECT")]
    Reject,
}

/// Why a request was accepted or rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    Authorized,
    InvalidSignature,
    MandateExpired,
    ContextMismatch,
    ReplayDetected,
    MalformedRequest,
}

impl Reason {
    pub const ALL: [Reason; 6] = [
        Reason::Authorized,
        Reason::InvalidSignature,
        Reason::MandateExpired,
        Reason::ContextMismatch,
        Reason::ReplayDetected,
        Reason::MalformedRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Authorized => "Authorized",
            Reason::InvalidSignature => "InvalidSignature",
            Reason::MandateExpired => "MandateExpired",
            Reason::ContextMismatch => "ContextMismatch",
            Reason::ReplayDetected => "ReplayDetected",
            Reason::MalformedRequest => "MalformedRequest",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The verdict for one request. The outcome is derived from the reason, so
/// `ACCEPT` can only ever carry `Authorized`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decision {
    reason: Reason,
    mandate_id: String,
}

impl Decision {
    pub fn new(reason: Reason, mandate_id: impl Into<String>) -> Self {
        Self {
            reason,
            mandate_id: mandate_id.into(),
        }
    }

    pub fn outcome(&self) -> Outcome {
        if self.reason == Reason::Authorized {
            Outcome::Accept
        } else {
            Outcome::Reject
        }
    }

    pub fn is_accept(&self) -> bool {
        self.outcome() == Outcome::Accept
    }

    pub fn reason(&self) -> Reason {
        self.reason
    }

    pub fn mandate_id(&self) -> &str {
        &self.mandate_id
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionWire {
    outcome: Outcome,
    reason: Reason,
    mandate_id: String,
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DecisionWire {
            outcome: self.outcome(),
            reason: self.reason,
            mandate_id: self.mandate_id.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = DecisionWire::deserialize(d)?;
        let decision = Decision::new(wire.reason, wire.mandate_id);
        if decision.outcome() != wire.outcome {
            return Err(serde::de::Error::custom(format!(
                "outcome {:?} inconsistent with reason {}",
                wire.outcome, wire.reason
            )));
        }
        Ok(decision)
    }
}

/// Per-stage wall time of one verification. Skipped stages report 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub signature_ns: u64,
    pub context_ns: u64,
    pub registry_ns: u64,
    pub total_ns: u64,
}

#[derive(Clone, Copy)]
enum Stage {
    Signature,
    Context,
    Registry,
}

trait Probe {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T;
}

struct NoProbe;

impl Probe for NoProbe {
    #[inline]
    fn time<T>(&mut self, _: Stage, f: impl FnOnce() -> T) -> T {
        f()
    }
}

impl Probe for StageTimings {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ns = elapsed_ns(start);
        match stage {
            Stage::Signature => self.signature_ns = ns,
            Stage::Context => self.context_ns = ns,
            Stage::Registry => self.registry_ns = ns,
        }
        out
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

fn pipeline<P: Probe>(
    request: &VerificationRequest,
    now: Timestamp,
    config: &VerifierConfig,
    registry: &dyn NonceStore,
    keystore: &dyn Keystore,
    probe: &mut P,
) -> Decision {
    let mandate = &request.mandate;
    if request.validate().is_err() {
        let id = if mandate.validate().is_ok() || is_hex_id(&mandate.mandate_id) {
            mandate.mandate_id.as_str()
        } else {
            ""
        };
        return Decision::new(Reason::MalformedRequest, id);
    }
    let reject = |reason| Decision::new(reason, mandate.mandate_id.clone());

    let signed = probe.time(Stage::Signature, || {
        keystore
            .public_key(&mandate.key_id)
            .is_some_and(|pk| verify_signature(mandate, pk))
    });
    if !signed {
        return reject(Reason::InvalidSignature);
    }

    let age = now.millis_since(mandate.issued_at);
    let window = i128::from(duration_to_millis_ceil(config.window));
    let skew = i128::from(duration_to_millis_ceil(config.skew_tolerance));
    if age > window + skew || -age > skew {
        return reject(Reason::MandateExpired);
    }

    if config.mode.enforces_context() {
        let bound = probe.time(Stage::Context, || {
            let recomputed = compute_context_hash_over(&request.context, &config.context_fields);
            let mut signed_hash = [0u8; 32];
            hex::decode_to_slice(&mandate.context_hash, &mut signed_hash).is_ok()
                && recomputed == signed_hash
        });
        if !bound {
            return reject(Reason::ContextMismatch);
        }
    }

    if config.mode.enforces_nonce() {
        let ttl = config.nonce_ttl(mandate.issued_at, now);
        let fresh = probe.time(Stage::Registry, || {
            registry.consume_once(&mandate.nonce_key(), now, ttl)
        });
        if !fresh {
            return reject(Reason::ReplayDetected);
        }
    }

    Decision::new(Reason::Authorized, mandate.mandate_id.clone())
}

fn is_hex_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Runs the full pipeline for one request.
pub fn verify(
    request: &VerificationRequest,
    now: Timestamp,
    config: &VerifierConfig,
    registry: &dyn NonceStore,
    keystore: &dyn Keystore,
) -> Decision {
    pipeline(request, now, config, registry, keystore, &mut NoProbe)
}

/// Same decision as [`verify`], plus monotonic-clock stage timings.
pub fn verify_instrumented(
    request: &VerificationRequest,
    now: Timestamp,
    config: &VerifierConfig,
    registry: &dyn NonceStore,
    keystore: &dyn Keystore,
) -> (Decision, StageTimings) {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let decision = pipeline(request, now, config, registry, keystore, &mut timings);
    timings.total_ns = elapsed_ns(start);
    (decision, timings)
}

/// Parses a JSON `{"mandate": ..., "context": ...}` body and verifies it.
/// Anything that does not parse is `MalformedRequest`.
pub fn verify_json(
    body: &[u8],
    now: Timestamp,
    config: &VerifierConfig,
    registry: &dyn NonceStore,
    keystore: &dyn Keystore,
) -> Decision {
    match serde_json::from_slice::<VerificationRequest>(body) {
        Ok(request) => verify(&request, now, config, registry, keystore),
        Err(_) => Decision::new(Reason::MalformedRequest, ""),
    }
}

/// A configured verifier sharing one registry and keystore across threads.
#[derive(Clone)]
pub struct Verifier {
    config: VerifierConfig,
    registry: Arc<dyn NonceStore>,
    keystore: Arc<dyn Keystore>,
}

impl Verifier {
    pub fn new(
        config: VerifierConfig,
        registry: Arc<dyn NonceStore>,
        keystore: Arc<dyn Keystore>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            registry,
            keystore,
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    pub fn registry(&self) -> &dyn NonceStore {
        self.registry.as_ref()
    }

    pub fn verify(&self, request: &VerificationRequest, now: Timestamp) -> Decision {
        verify(request, now, &self.config, self.registry.as_ref(), self.keystore.as_ref())
    }

    pub fn verify_instrumented(
        &self,
        request: &VerificationRequest,
        now: Timestamp,
    ) -> (Decision, StageTimings) {
        verify_instrumented(request, now, &self.config, self.registry.as_ref(), self.keystore.as_ref())
    }

    pub fn verify_json(&self, body: &[u8], now: Timestamp) -> Decision {
        verify_json(body, now, &self.config, self.registry.as_ref(), self.keystore.as_ref())
    }
}

impl fmt::Debug for Verifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Verifier")
            .field("config", &self.config)
            .field("registry", &self.registry.stats())
            .finish_non_exhaustive()
    }
}
