//! Provider-agnostic completion interface.
//!
//! Agents never talk to a model directly: they render a [`prompt`] template,
//! wrap it in a [`CompletionRequest`] and hand it to a [`Gateway`]. The
//! gateway owns the provider (remote HTTP or the fixture-backed stub) and
//! measures elapsed time around every call.

pub mod prompt;
mod remote;
pub mod structured;
mod stub;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{millis, Clock, SystemClock};

pub use prompt::{render_prompt, FewShotExample, PromptError, PromptRegistry, PromptTemplate};
pub use remote::RemoteHttpProvider;
pub use structured::{parse_structured, SchemaId, Structured, StructuredError};
pub use stub::{StubProvider, REQUEST_KEY_PREFIX};

/// Pipeline stage a request belongs to. Doubles as the prompt template id and
/// as the stub fixture directory name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CqAgent,
    IntentAgent,
    RecBaseline,
    RecSustainable,
    ExplainAgent,
    Guardrail,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::CqAgent,
        Stage::IntentAgent,
        Stage::RecBaseline,
        Stage::RecSustainable,
        Stage::ExplainAgent,
        Stage::Guardrail,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::CqAgent => "cq_agent",
            Stage::IntentAgent => "intent_agent",
            Stage::RecBaseline => "rec_baseline",
            Stage::RecSustainable => "rec_sustainable",
            Stage::ExplainAgent => "explain_agent",
            Stage::Guardrail => "guardrail",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Low temperature for classification stages, higher for generated prose.
    pub fn default_temperature(&self) -> f32 {
        match self {
            Stage::IntentAgent | Stage::Guardrail => 0.2,
            _ => 0.7,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f32),
    #[error("max_output_tokens must be positive")]
    MaxTokens,
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("no stub fixture for stage {stage} key {key:?}")]
    Fixture { stage: Stage, key: String },
    #[error("stub fixture unreadable at {path}: {message}")]
    FixtureUnreadable { path: String, message: String },
    #[error("prompt for stage {0} carries no request key")]
    MissingRequestKey(Stage),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Timeout(_) | GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub session_id: Option<String>,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub metadata: RequestMetadata,
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, stage: Stage) -> Result<Self, GatewayError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        Ok(Self {
            prompt,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: stage.default_temperature(),
            metadata: RequestMetadata {
                session_id: None,
                stage,
            },
        })
    }

    pub fn with_session(mut self, session_id: impl Into<String>) -> Self {
        self.metadata.session_id = Some(session_id.into());
        self
    }

    pub fn with_temperature(mut self, t: f32) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&t) {
            return Err(GatewayError::Temperature(t));
        }
        self.temperature = t;
        Ok(self)
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Result<Self, GatewayError> {
        if n == 0 {
            return Err(GatewayError::MaxTokens);
        }
        self.max_output_tokens = n;
        Ok(self)
    }

    pub fn stage(&self) -> Stage {
        self.metadata.stage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub provider: String,
    pub elapsed_ms: f64,
    pub token_estimate: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteHttp,
    Stub,
}

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_ref: Option<String>,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl ProviderConfig {
    pub fn stub(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Stub,
            endpoint: None,
            model_name: None,
            auth_ref: None,
            fixture_dir: Some(fixture_dir.into()),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::RemoteHttp,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            auth_ref: None,
            fixture_dir: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        match self.kind {
            ProviderKind::RemoteHttp => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote_http requires endpoint".into()));
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote_http requires model_name".into()));
                }
            }
            ProviderKind::Stub => {
                if self.fixture_dir.is_none() {
                    return Err(GatewayError::Config("stub requires fixture_dir".into()));
                }
            }
        }
        Ok(())
    }
}

/// Raw provider output before timing is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub token_estimate: Option<u32>,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, GatewayError>;
}

/// Rough token count: four characters per token.
pub(crate) fn estimate_tokens(text: &str) -> u32 {
    (text.chars().count() as u32).div_ceil(4)
}

#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .finish()
    }
}

impl Gateway {
    pub fn from_config(config: &ProviderConfig, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        config.validate()?;
        let provider: Arc<dyn Provider> = match config.kind {
            ProviderKind::Stub => Arc::new(StubProvider::new(config.fixture_dir.clone().expect("validated"))),
            ProviderKind::RemoteHttp => Arc::new(RemoteHttpProvider::new(config)?),
        };
        Ok(Self { provider, clock })
    }

    pub fn with_provider(provider: Arc<dyn Provider>, clock: Arc<dyn Clock>) -> Self {
        Self { provider, clock }
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let start = self.clock.monotonic();
        let reply = self.provider.complete(request)?;
        let elapsed = self.clock.monotonic().saturating_sub(start);
        tracing::debug!(stage = %request.stage(), elapsed_ms = millis(elapsed), "completion");
        Ok(CompletionResult {
            text: reply.text,
            provider: self.provider.name().to_owned(),
            elapsed_ms: millis(elapsed),
            token_estimate: reply.token_estimate,
        })
    }
}

/// One-shot completion against a freshly built provider.
pub fn complete(request: &CompletionRequest, config: &ProviderConfig) -> Result<CompletionResult, GatewayError> {
    Gateway::from_config(config, Arc::new(SystemClock::new()))?.complete(request)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::stub("/tmp").validate().is_ok());
        assert!(ProviderConfig::remote("http://localhost:1", "m").validate().is_ok());
        let mut c = ProviderConfig::remote("http://localhost:1", "m");
        c.model_name = None;
        assert!(matches!(c.validate(), Err(GatewayError::Config(_))));
        let mut c = ProviderConfig::stub("/tmp");
        c.fixture_dir = None;
        assert!(matches!(c.validate(), Err(GatewayError::Config(_))));
    }

    #[test]
    fn request_invariants() {
        assert!(matches!(
            CompletionRequest::new("  ", Stage::CqAgent),
            Err(GatewayError::EmptyPrompt)
        ));
        let r = CompletionRequest::new("hi", Stage::Guardrail).unwrap();
        assert_eq!(r.temperature, 0.2);
        assert_eq!(CompletionRequest::new("hi", Stage::CqAgent).unwrap().temperature, 0.7);
        assert!(r.clone().with_temperature(2.5).is_err());
        assert!(r.with_max_output_tokens(0).is_err());
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(Stage::parse(s.as_str()), Some(s));
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
    }
}
