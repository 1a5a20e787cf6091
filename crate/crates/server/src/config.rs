//! Settings shared by every subcommand. Each flag can also come from a
//! `WAYFARE_*` environment variable.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use wayfare_core::domain::DEFAULT_WTC_THRESHOLD;
use wayfare_core::gateway::ProviderConfig;
use wayfare_core::runtime::{bundled_fixture_dir, EngineConfig, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    Stub,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Directory holding the session store.
    #[arg(long, env = "WAYFARE_DATA_DIR", default_value = "wayfare-data")]
    pub data_dir: PathBuf,

    #[arg(long, env = "WAYFARE_PROVIDER", value_enum, default_value_t = ProviderChoice::Stub)]
    pub provider: ProviderChoice,

    /// Stub fixture directory; defaults to the fixtures shipped with the source.
    #[arg(long, env = "WAYFARE_FIXTURES")]
    pub fixtures: Option<PathBuf>,

    #[arg(long, env = "WAYFARE_REMOTE_ENDPOINT")]
    pub endpoint: Option<String>,

    #[arg(long, env = "WAYFARE_REMOTE_MODEL")]
    pub model: Option<String>,

    /// Name of the environment variable that holds the API key.
    #[arg(long, env = "WAYFARE_AUTH_ENV")]
    pub auth_env: Option<String>,

    #[arg(long, env = "WAYFARE_TIMEOUT_MS")]
    pub timeout_ms: Option<u64>,

    #[arg(long, env = "WAYFARE_WTC_THRESHOLD", default_value_t = DEFAULT_WTC_THRESHOLD)]
    pub wtc_threshold: f64,

    /// CSV replacing the bundled city metrics.
    #[arg(long, env = "WAYFARE_METRICS")]
    pub metrics: Option<PathBuf>,

    /// Directory of prompt template overrides.
    #[arg(long, env = "WAYFARE_PROMPTS")]
    pub prompts: Option<PathBuf>,
}

impl EngineArgs {
    pub fn engine_config(&self) -> Result<EngineConfig, RuntimeError> {
        let mut provider = match self.provider {
            ProviderChoice::Stub => ProviderConfig::stub(self.fixtures.clone().unwrap_or_else(bundled_fixture_dir)),
            ProviderChoice::Remote => {
                let mut p = ProviderConfig::remote(
                    self.endpoint.clone().unwrap_or_default(),
                    self.model.clone().unwrap_or_default(),
                );
                p.auth_ref = self.auth_env.clone();
                p
            }
        };
        if let Some(ms) = self.timeout_ms {
            provider.timeout_ms = ms;
        }
        let config = EngineConfig {
            provider,
            metrics_path: self.metrics.clone(),
            prompts_dir: self.prompts.clone(),
            wtc_threshold: self.wtc_threshold,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,

    #[arg(long, env = "WAYFARE_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,

    /// Comma-separated origins allowed to call the API from a browser.
    #[arg(long, env = "WAYFARE_CORS_ORIGINS", value_delimiter = ',')]
    pub cors_origins: Vec<String>,
}
