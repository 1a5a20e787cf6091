//! Wiring shared by the CLI, the HTTP service, tests and benches.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, Agents};
use crate::clock::Clock;
use crate::domain::DEFAULT_WTC_THRESHOLD;
use crate::gateway::{Gateway, GatewayError, PromptError, PromptRegistry, ProviderConfig};
use crate::metrics::{load_city_metrics, DataError, MetricsTable};
use crate::orchestrator::Engine;
use crate::store::SessionStore;

const SCENARIOS_JSON: &str = include_str!("../data/scenarios.json");

/// A predefined starter query offered to users.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub key: String,
    pub title: String,
    pub query: String,
}

pub fn bundled_scenarios() -> Vec<Scenario> {
    serde_json::from_str(SCENARIOS_JSON).expect("bundled scenarios are valid")
}

/// Directory holding the stub fixtures shipped in the source tree.
pub fn bundled_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("stub")
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("provider: {0}")]
    Provider(#[from] GatewayError),
    #[error("prompts: {0}")]
    Prompts(#[from] PromptError),
    #[error("metrics table: {0}")]
    Metrics(#[from] DataError),
    #[error("wtc threshold {0} outside [0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub provider: ProviderConfig,
    /// CSV replacing the bundled metrics table.
    pub metrics_path: Option<PathBuf>,
    /// Directory of `*.toml` prompt overrides.
    pub prompts_dir: Option<PathBuf>,
    pub wtc_threshold: f64,
}

impl EngineConfig {
    pub fn stub(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            provider: ProviderConfig::stub(fixture_dir),
            metrics_path: None,
            prompts_dir: None,
            wtc_threshold: DEFAULT_WTC_THRESHOLD,
        }
    }

    /// Stub provider over the bundled fixtures.
    pub fn bundled_stub() -> Self {
        Self::stub(bundled_fixture_dir())
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if !(0.0..=1.0).contains(&self.wtc_threshold) {
            return Err(RuntimeError::Threshold(self.wtc_threshold));
        }
        self.provider.validate()?;
        Ok(())
    }

    pub fn build_agents(&self, clock: Arc<dyn Clock>) -> Result<Agents, RuntimeError> {
        self.validate()?;
        let gateway = Gateway::from_config(&self.provider, clock)?;
        let prompts = match &self.prompts_dir {
            Some(dir) => PromptRegistry::with_overrides(dir)?,
            None => PromptRegistry::builtin(),
        };
        let metrics = match &self.metrics_path {
            Some(path) => load_city_metrics(path)?,
            None => MetricsTable::bundled(),
        };
        let config = AgentConfig {
            wtc_threshold: self.wtc_threshold,
            ..AgentConfig::default()
        };
        Ok(Agents::new(gateway, Arc::new(prompts), Arc::new(metrics), config))
    }

    pub fn build_engine(&self, store: Arc<dyn SessionStore>, clock: Arc<dyn Clock>) -> Result<Engine, RuntimeError> {
        let agents = self.build_agents(clock.clone())?;
        Ok(Engine::new(store, agents, clock))
    }
}
