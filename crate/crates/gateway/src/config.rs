use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use reqwest::Url;
use serde::Deserialize;
use thiserror::Error;
use ztrv_core::{ConfigError, ContextField, Mode, VerifierConfig, DEFAULT_PER_ENTRY_BYTES};

pub const CONFIG_ENV: &str = "ZTRV_CONFIG";
pub const DEFAULT_LISTEN_ADDRESS: &str = "127.0.0.1:8080";
pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen_address: String,
    pub upstream_url: Url,
    pub verifier: VerifierConfig,
    pub keystore_path: PathBuf,
    pub request_body_limit: usize,
    pub per_entry_bytes: u64,
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: `{field}` {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigFileError {
    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid { field, reason: reason.into() }
    }
}

/// On-disk shape: one flat JSON object.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_listen")]
    listen_address: String,
    upstream_url: String,
    keystore_path: PathBuf,
    #[serde(default)]
    mode: Mode,
    /// Seconds.
    #[serde(default = "default_window")]
    window: u64,
    /// Seconds.
    #[serde(default)]
    skew_tolerance: u64,
    #[serde(default)]
    context_fields: Option<Vec<ContextField>>,
    #[serde(default = "default_body_limit")]
    request_body_limit: usize,
    #[serde(default = "default_entry_bytes")]
    per_entry_bytes: u64,
}

fn default_listen() -> String {
    DEFAULT_LISTEN_ADDRESS.to_owned()
}

fn default_window() -> u64 {
    ztrv_core::verifier::DEFAULT_WINDOW.as_secs()
}

fn default_body_limit() -> usize {
    DEFAULT_BODY_LIMIT
}

fn default_entry_bytes() -> u64 {
    DEFAULT_PER_ENTRY_BYTES
}

impl GatewayConfig {
    /// Parses config text. A relative `keystore_path` is resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ConfigFileError> {
        let raw: RawConfig = serde_json::from_str(text)?;

        let upstream_url = Url::parse(&raw.upstream_url)
            .map_err(|e| ConfigFileError::invalid("upstream_url", e.to_string()))?;
        if !matches!(upstream_url.scheme(), "http" | "https") || upstream_url.host_str().is_none() {
            return Err(ConfigFileError::invalid("upstream_url", "must be an http(s) URL with a host"));
        }
        validate_listen(&raw.listen_address)?;
        if raw.request_body_limit == 0 {
            return Err(ConfigFileError::invalid("request_body_limit", "must be greater than zero"));
        }

        let verifier = VerifierConfig {
            mode: raw.mode,
            window: Duration::from_secs(raw.window),
            skew_tolerance: Duration::from_secs(raw.skew_tolerance),
            context_fields: raw
                .context_fields
                .unwrap_or_else(|| ContextField::DEFAULT_BINDING.to_vec()),
        };
        verifier.validate().map_err(|e| match e {
            ConfigError::ZeroWindow => ConfigFileError::invalid("window", "must be greater than zero"),
            ConfigError::NoContextFields(_) => ConfigFileError::invalid("context_fields", e.to_string()),
        })?;

        let keystore_path = if raw.keystore_path.is_relative() {
            base_dir.join(raw.keystore_path)
        } else {
            raw.keystore_path
        };

        Ok(Self {
            listen_address: raw.listen_address,
            upstream_url,
            verifier,
            keystore_path,
            request_body_limit: raw.request_body_limit,
            per_entry_bytes: raw.per_entry_bytes,
        })
    }
}

fn validate_listen(addr: &str) -> Result<(), ConfigFileError> {
    match addr.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(()),
        _ => Err(ConfigFileError::invalid("listen_address", format!("`{addr}` is not host:port"))),
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<GatewayConfig, ConfigFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: path.to_owned(),
        source,
    })?;
    GatewayConfig::from_json(&text, path.parent().unwrap_or(Path::new(".")))
}

/// `--config` wins over the environment variable.
pub fn resolve_config_path(flag: Option<PathBuf>, env: Option<OsString>) -> Option<PathBuf> {
    flag.or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
}
