//! Zero-trust runtime verification for mandate-based agent payments.
//!
//! A [`Mandate`] is a signed authorization bound to an [`ExecutionContext`]
//! by hash. The [`verifier`] accepts a request only if the signature holds,
//! the mandate is fresh, the presented context hashes to the bound value, and
//! the mandate's nonce has not been consumed within its window. Consumption
//! state lives in a [`NonceRegistry`].

pub mod clock;
pub mod keys;
pub mod mandate;
pub mod registry;
pub mod verifier;

pub use clock::{Clock, SystemClock, Timestamp};
pub use keys::{IssuerKey, IssuerKeyFile, KeyError, Keystore, PublicKey, StaticKeystore};
pub use mandate::{
    canonical_encode, compute_context_hash, compute_context_hash_over, issue_mandate,
    issue_mandate_over, verify_signature, ContextField, ExecutionContext, Mandate, PaymentPayload,
    ValidationError, VerificationRequest,
};
pub use registry::{NonceRegistry, NonceStore, RegistryStats, DEFAULT_PER_ENTRY_BYTES};
pub use verifier::{
    verify, verify_instrumented, verify_json, ConfigError, Decision, Mode, Outcome, Reason,
    StageTimings, Verifier, VerifierConfig,
};
