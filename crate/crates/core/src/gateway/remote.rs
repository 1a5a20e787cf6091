//! Completion over plain HTTP with a JSON body
//! `{model, prompt, max_tokens, temperature}`.

use serde_json::{json, Value};

use super::{estimate_tokens, CompletionRequest, GatewayError, Provider, ProviderConfig, ProviderReply};

pub struct RemoteHttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    auth_ref: Option<String>,
    timeout: std::time::Duration,
}

impl std::fmt::Debug for RemoteHttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteHttpProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("has_auth", &self.auth_ref.is_some())
            .finish()
    }
}

impl RemoteHttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let timeout = config.timeout();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: config.endpoint.clone().expect("validated"),
            model: config.model_name.clone().expect("validated"),
            auth_ref: config.auth_ref.clone(),
            timeout,
        })
    }
}

/// Pulls completion text out of the common response shapes, falling back to
/// the raw body.
fn extract_text(body: &str) -> String {
    let Ok(value) = serde_json::from_str::<Value>(body) else {
        return body.trim().to_owned();
    };
    let candidates = [
        value.pointer("/text"),
        value.pointer("/output"),
        value.pointer("/choices/0/text"),
        value.pointer("/choices/0/message/content"),
        value.pointer("/candidates/0/content/parts/0/text"),
    ];
    let text = candidates
        .into_iter()
        .flatten()
        .find_map(Value::as_str)
        .map(str::to_owned);
    text.unwrap_or_else(|| body.trim().to_owned())
}

/// First line of an error body, capped, so echoed prompts never travel further.
fn excerpt(body: &str) -> String {
    const MAX: usize = 160;
    let line = body.trim().lines().next().unwrap_or_default();
    match line.char_indices().nth(MAX) {
        Some((at, _)) => format!("{}...", &line[..at]),
        None => line.to_owned(),
    }
}

impl Provider for RemoteHttpProvider {
    fn name(&self) -> &str {
        "remote_http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        let body = json!({
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        })
        .to_string();

        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json");
        if let Some(var) = &self.auth_ref {
            match std::env::var(var) {
                Ok(secret) => call = call.header("authorization", format!("Bearer {secret}")),
                Err(_) => {
                    return Err(GatewayError::Config(format!("secret reference {var} is not set")));
                }
            }
        }

        let mut response = call.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout(self.timeout),
            other => GatewayError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout(self.timeout),
            other => GatewayError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Provider {
                status,
                body: excerpt(&text),
            });
        }
        let text = extract_text(&text);
        Ok(ProviderReply {
            token_estimate: Some(estimate_tokens(&text)),
            text,
        })
    }
}
