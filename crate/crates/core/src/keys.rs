//! Issuer keys and the keystore the verifier resolves `key_id`s against.
//!
//! Mandates are signed with Ed25519. Public keys travel as standard base64
//! (with padding) in a keystore file: one JSON object mapping `key_id` to key.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

/// Name of the signature scheme wired into the default keystore.
pub const SIGNATURE_SCHEME: &str = "ed25519";

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("key `{key_id}`: invalid base64: {source}")]
    Base64 {
        key_id: String,
        source: base64::DecodeError,
    },
    #[error("key `{key_id}`: expected 32 key bytes, got {len}")]
    Length { key_id: String, len: usize },
    #[error("key `{key_id}`: not a valid ed25519 public key")]
    InvalidPoint { key_id: String },
    #[error("keystore is empty")]
    Empty,
    #[error("keystore: {0}")]
    Json(#[from] serde_json::Error),
    #[error("keystore {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A signing key held by a mandate issuer.
#[derive(Clone)]
pub struct IssuerKey {
    key_id: String,
    signing: SigningKey,
}

impl IssuerKey {
    pub fn from_secret(key_id: impl Into<String>, secret: [u8; 32]) -> Self {
        Self {
            key_id: key_id.into(),
            signing: SigningKey::from_bytes(&secret),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(key_id: impl Into<String>, rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(key_id, secret)
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub(crate) fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.signing.sign(message).to_bytes()
    }
}

impl fmt::Debug for IssuerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IssuerKey")
            .field("key_id", &self.key_id)
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

/// An issuer's public verification key.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(key_id: &str, bytes: &[u8]) -> Result<Self, KeyError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| KeyError::Length {
            key_id: key_id.to_owned(),
            len: bytes.len(),
        })?;
        VerifyingKey::from_bytes(&arr)
            .map(PublicKey)
            .map_err(|_| KeyError::InvalidPoint {
                key_id: key_id.to_owned(),
            })
    }

    pub fn from_base64(key_id: &str, encoded: &str) -> Result<Self, KeyError> {
        let bytes = BASE64.decode(encoded).map_err(|source| KeyError::Base64 {
            key_id: key_id.to_owned(),
            source,
        })?;
        Self::from_bytes(key_id, &bytes)
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.0.as_bytes())
    }

    /// Strict Ed25519 verification; any malformed input yields `false`.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        self.0.verify_strict(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_base64())
    }
}

/// Resolves a mandate's `key_id` to the issuer public key that must verify it.
pub trait Keystore: Send + Sync {
    fn public_key(&self, key_id: &str) -> Option<&PublicKey>;
}

/// Fixed key set loaded once at startup.
#[derive(Debug, Clone, Default)]
pub struct StaticKeystore {
    keys: HashMap<String, PublicKey>,
}

impl StaticKeystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_key(mut self, key_id: impl Into<String>, key: PublicKey) -> Self {
        self.insert(key_id, key);
        self
    }

    pub fn insert(&mut self, key_id: impl Into<String>, key: PublicKey) {
        self.keys.insert(key_id.into(), key);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Parses the keystore file format: `{"<key_id>": "<base64 public key>", ...}`.
    pub fn from_json(text: &str) -> Result<Self, KeyError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        if raw.is_empty() {
            return Err(KeyError::Empty);
        }
        let mut store = Self::new();
        for (key_id, encoded) in raw {
            let key = PublicKey::from_base64(&key_id, &encoded)?;
            store.insert(key_id, key);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KeyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let sorted: BTreeMap<&str, String> = self
            .keys
            .iter()
            .map(|(id, k)| (id.as_str(), k.to_base64()))
            .collect();
        serde_json::to_string_pretty(&sorted).expect("string map serializes")
    }
}

impl Keystore for StaticKeystore {
    fn public_key(&self, key_id: &str) -> Option<&PublicKey> {
        self.keys.get(key_id)
    }
}

/// On-disk form of an issuer's secret key, written by `keygen`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuerKeyFile {
    pub key_id: String,
    pub scheme: String,
    pub secret_key: String,
}

impl IssuerKeyFile {
    pub fn from_key(key: &IssuerKey) -> Self {
        Self {
            key_id: key.key_id().to_owned(),
            scheme: SIGNATURE_SCHEME.to_owned(),
            secret_key: BASE64.encode(key.secret_bytes()),
        }
    }

    pub fn into_key(self) -> Result<IssuerKey, KeyError> {
        let bytes = BASE64
            .decode(&self.secret_key)
            .map_err(|source| KeyError::Base64 {
                key_id: self.key_id.clone(),
                source,
            })?;
        let secret: [u8; 32] = bytes.as_slice().try_into().map_err(|_| KeyError::Length {
            key_id: self.key_id.clone(),
            len: bytes.len(),
        })?;
        Ok(IssuerKey::from_secret(self.key_id, secret))
    }
}
