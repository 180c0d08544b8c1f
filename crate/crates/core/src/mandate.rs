//! Mandates, execution contexts and the byte strings they are signed and
//! bound over.
//!
//! Every variable-length value is framed as a 4-byte big-endian length
//! followed by its UTF-8 bytes; integers are rendered as decimal ASCII first.
//! The same framing is used for the signing preimage
//! ([`canonical_encode`]) and for the context hash
//! ([`compute_context_hash`]), so neither can be confused by shifting bytes
//! between adjacent fields.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::clock::Timestamp;
use crate::keys::{IssuerKey, PublicKey};

/// Prefix of nonce keys in the registry.
pub const NONCE_KEY_PREFIX: &str = "nonce:";

const ID_HEX_LEN: usize = 32;
const HASH_HEX_LEN: usize = 64;

/// A context attribute that may participate in the binding hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextField {
    TaskId,
    AgentId,
    MerchantId,
    Scope,
}

impl ContextField {
    /// Hash inputs used when no policy overrides them.
    pub const DEFAULT_BINDING: [ContextField; 4] = [
        ContextField::TaskId,
        ContextField::AgentId,
        ContextField::MerchantId,
        ContextField::Scope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContextField::TaskId => "task_id",
            ContextField::AgentId => "agent_id",
            ContextField::MerchantId => "merchant_id",
            ContextField::Scope => "scope",
        }
    }
}

/// Why a mandate or context failed its structural checks.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("field `{field}` must be exactly {expected} lowercase hex characters")]
    InvalidHex {
        field: &'static str,
        expected: usize,
    },
    #[error("currency must be three uppercase ASCII letters, got {0:?}")]
    InvalidCurrency(String),
    #[error("issued_at must not be negative")]
    NegativeTimestamp,
}

/// Runtime attributes a mandate is bound to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionContext {
    pub task_id: String,
    pub agent_id: String,
    pub merchant_id: String,
    /// Requested operation or path.
    pub scope: String,
}

impl ExecutionContext {
    pub fn new(
        task_id: impl Into<String>,
        agent_id: impl Into<String>,
        merchant_id: impl Into<String>,
        scope: impl Into<String>,
    ) -> Self {
        Self {
            task_id: task_id.into(),
            agent_id: agent_id.into(),
            merchant_id: merchant_id.into(),
            scope: scope.into(),
        }
    }

    pub fn field(&self, field: ContextField) -> &str {
        match field {
            ContextField::TaskId => &self.task_id,
            ContextField::AgentId => &self.agent_id,
            ContextField::MerchantId => &self.merchant_id,
            ContextField::Scope => &self.scope,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for field in ContextField::DEFAULT_BINDING {
            if self.field(field).is_empty() {
                return Err(ValidationError::EmptyField(field.name()));
            }
        }
        Ok(())
    }
}

/// What the mandate authorizes: an amount in minor units of `currency`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaymentPayload {
    pub amount: u64,
    pub currency: String,
}

impl PaymentPayload {
    pub fn new(amount: u64, currency: impl Into<String>) -> Self {
        Self {
            amount,
            currency: currency.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let c = self.currency.as_bytes();
        if c.len() == 3 && c.iter().all(u8::is_ascii_uppercase) {
            Ok(())
        } else {
            Err(ValidationError::InvalidCurrency(self.currency.clone()))
        }
    }
}

/// A signed, context-bound payment authorization.
///
/// Fields are public because this is also the wire form; nothing is checked
/// at construction. [`Mandate::validate`] enforces the structural invariants
/// and the verifier checks the signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mandate {
    pub mandate_id: String,
    pub nonce: String,
    pub issued_at: Timestamp,
    pub context_hash: String,
    pub payload: PaymentPayload,
    pub key_id: String,
    #[serde(with = "base64_bytes")]
    pub signature: Vec<u8>,
}

impl Mandate {
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_hex("mandate_id", &self.mandate_id, ID_HEX_LEN)?;
        check_hex("nonce", &self.nonce, ID_HEX_LEN)?;
        check_hex("context_hash", &self.context_hash, HASH_HEX_LEN)?;
        if self.issued_at.as_millis() < 0 {
            return Err(ValidationError::NegativeTimestamp);
        }
        if self.key_id.is_empty() {
            return Err(ValidationError::EmptyField("key_id"));
        }
        self.payload.validate()
    }

    /// The signing preimage for this mandate's fields.
    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_encode(
            &self.mandate_id,
            &self.nonce,
            self.issued_at,
            &self.context_hash,
            &self.payload,
        )
    }

    /// Registry key under which this mandate's nonce is consumed.
    pub fn nonce_key(&self) -> String {
        format!("{NONCE_KEY_PREFIX}{}", self.nonce)
    }
}

fn check_hex(field: &'static str, value: &str, expected: usize) -> Result<(), ValidationError> {
    let ok = value.len() == expected
        && value
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    if ok {
        Ok(())
    } else {
        Err(ValidationError::InvalidHex { field, expected })
    }
}

/// A mandate presented together with the context it is being executed in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationRequest {
    pub mandate: Mandate,
    pub context: ExecutionContext,
}

impl VerificationRequest {
    pub fn new(mandate: Mandate, context: ExecutionContext) -> Self {
        Self { mandate, context }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.mandate.validate()?;
        self.context.validate()
    }
}

fn push_framed(out: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX bytes");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Deterministic, injective signing preimage.
///
/// Field order: mandate_id, nonce, issued_at, context_hash, payload.amount,
/// payload.currency.
pub fn canonical_encode(
    mandate_id: &str,
    nonce: &str,
    issued_at: Timestamp,
    context_hash: &str,
    payload: &PaymentPayload,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        6 * 4 + mandate_id.len() + nonce.len() + 20 + context_hash.len() + 20 + payload.currency.len(),
    );
    push_framed(&mut out, mandate_id.as_bytes());
    push_framed(&mut out, nonce.as_bytes());
    push_framed(&mut out, issued_at.as_millis().to_string().as_bytes());
    push_framed(&mut out, context_hash.as_bytes());
    push_framed(&mut out, payload.amount.to_string().as_bytes());
    push_framed(&mut out, payload.currency.as_bytes());
    out
}

/// SHA-256 over the framed task, agent, merchant and scope attributes.
pub fn compute_context_hash(ctx: &ExecutionContext) -> [u8; 32] {
    compute_context_hash_over(ctx, &ContextField::DEFAULT_BINDING)
}

/// SHA-256 over the framed values of `fields`, in the given order.
pub fn compute_context_hash_over(ctx: &ExecutionContext, fields: &[ContextField]) -> [u8; 32] {
    let mut preimage = Vec::with_capacity(fields.iter().map(|f| 4 + ctx.field(*f).len()).sum());
    for field in fields {
        push_framed(&mut preimage, ctx.field(*field).as_bytes());
    }
    Sha256::digest(&preimage).into()
}

/// Issues a mandate bound to `ctx` under the default binding attributes.
pub fn issue_mandate<R: RngCore + CryptoRng>(
    key: &IssuerKey,
    ctx: &ExecutionContext,
    payload: PaymentPayload,
    now: Timestamp,
    rng: &mut R,
) -> Mandate {
    issue_mandate_over(key, ctx, &ContextField::DEFAULT_BINDING, payload, now, rng)
}

/// Issues a mandate whose context hash covers exactly `fields`.
pub fn issue_mandate_over<R: RngCore + CryptoRng>(
    key: &IssuerKey,
    ctx: &ExecutionContext,
    fields: &[ContextField],
    payload: PaymentPayload,
    now: Timestamp,
    rng: &mut R,
) -> Mandate {
    let mut id = [0u8; 16];
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut id);
    rng.fill_bytes(&mut nonce);
    let mut mandate = Mandate {
        mandate_id: hex::encode(id),
        nonce: hex::encode(nonce),
        issued_at: now,
        context_hash: hex::encode(compute_context_hash_over(ctx, fields)),
        payload,
        key_id: key.key_id().to_owned(),
        signature: Vec::new(),
    };
    mandate.signature = key.sign(&mandate.signing_bytes()).to_vec();
    mandate
}

/// True iff the mandate's signature verifies over its canonical encoding.
pub fn verify_signature(mandate: &Mandate, public_key: &PublicKey) -> bool {
    public_key.verify(&mandate.signing_bytes(), &mandate.signature)
}

mod base64_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        BASE64.decode(text).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ExecutionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.task_id, self.agent_id, self.merchant_id, self.scope
        )
    }
}
