//! Fixture-backed provider for offline, deterministic runs.
//!
//! Layout: `<fixture_dir>/<stage>/<key>.txt`. The key is read from the
//! `request-key:` line every prompt template carries.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use super::{estimate_tokens, CompletionRequest, GatewayError, Provider, ProviderReply, Stage};

/// Prefix of the prompt line that names the fixture to serve.
pub const REQUEST_KEY_PREFIX: &str = "request-key:";

#[derive(Debug)]
pub struct StubProvider {
    root: PathBuf,
    cache: RwLock<HashMap<(Stage, String), Arc<str>>>,
}

impl StubProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &std::path::Path {
        &self.root
    }

    /// Extracts the fixture key from a rendered prompt.
    pub fn request_key(prompt: &str) -> Option<&str> {
        prompt.lines().find_map(|line| {
            line.trim()
                .strip_prefix(REQUEST_KEY_PREFIX)
                .map(str::trim)
                .filter(|k| !k.is_empty())
        })
    }

    pub fn fixture(&self, stage: Stage, key: &str) -> Result<Arc<str>, GatewayError> {
        let cache_key = (stage, key.to_owned());
        if let Some(hit) = self.cache.read().expect("stub cache").get(&cache_key) {
            return Ok(hit.clone());
        }
        if key.contains(['/', '\\']) || key.starts_with('.') {
            return Err(GatewayError::Fixture {
                stage,
                key: key.to_owned(),
            });
        }
        let path = self.root.join(stage.as_str()).join(format!("{key}.txt"));
        let text: Arc<str> = match std::fs::read_to_string(&path) {
            Ok(t) => t.into(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(GatewayError::Fixture {
                    stage,
                    key: key.to_owned(),
                })
            }
            Err(e) => {
                return Err(GatewayError::FixtureUnreadable {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        self.cache.write().expect("stub cache").insert(cache_key, text.clone());
        Ok(text)
    }
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        let stage = request.stage();
        let key = Self::request_key(&request.prompt).ok_or(GatewayError::MissingRequestKey(stage))?;
        let text = self.fixture(stage, key)?;
        Ok(ProviderReply {
            token_estimate: Some(estimate_tokens(&text)),
            text: text.to_string(),
        })
    }
}
