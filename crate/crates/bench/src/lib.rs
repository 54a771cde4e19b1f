//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use eosched_core::{EnvConfig, ScenarioConfig};

/// Built France-like scenario, shared by all benches.
pub fn france_like_env() -> Arc<EnvConfig> {
    ScenarioConfig::france_like().build().expect("builtin scenario builds").env
}
