//! HTTP mediation layer: verifies every mandate-bearing request and forwards
//! only accepted ones to the merchant backend.

pub mod config;
pub mod merchant;
pub mod server;

pub use config::{load_config, resolve_config_path, ConfigFileError, GatewayConfig, CONFIG_ENV};
pub use merchant::{LedgerEntry, MockMerchant, FULFILL_PATH};
pub use server::{Gateway, GatewayError, DECISION_HEADER};
