use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{PolicyBackend, PolicyError, PolicyRequest, PolicyResponse};
use crate::clock::SharedClock;
use crate::model::word_count;

pub const ENV_ENDPOINT_URL: &str = "VOXKIT_ENDPOINT_URL";
pub const ENV_API_KEY: &str = "VOXKIT_API_KEY";
pub const ENV_MODEL: &str = "VOXKIT_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    /// Full URL of a chat-completions style endpoint.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            max_retries: 2,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads endpoint, key and model from the `VOXKIT_*` environment variables.
    pub fn from_env() -> Result<Self, PolicyError> {
        let endpoint = std::env::var(ENV_ENDPOINT_URL)
            .map_err(|_| PolicyError::Config(format!("{ENV_ENDPOINT_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        let mut config = Self::new(endpoint, model);
        config.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(config)
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::Client,
    clock: SharedClock,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig, clock: SharedClock) -> Result<Self, PolicyError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| PolicyError::Config(e.to_string()))?;
        Ok(Self {
            config,
            client,
            clock,
        })
    }

    pub fn request_body(&self, request: &PolicyRequest) -> Value {
        let tools: Vec<Value> = request
            .local_tools
            .iter()
            .map(|t| serde_json::to_value(t).expect("tool specs serialize"))
            .collect();
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.rendered_context}],
            "tools": tools,
        })
    }

    async fn attempt(&self, body: &Value) -> Result<PolicyResponse, (bool, PolicyError)> {
        let mut builder = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| (true, PolicyError::Transport(e.to_string())))?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| (true, PolicyError::Transport(e.to_string())))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let body: String = text.chars().take(200).collect();
            return Err((
                retryable,
                PolicyError::HttpError {
                    status: status.as_u16(),
                    body,
                },
            ));
        }
        parse_response(&text).map_err(|e| (false, e))
    }
}

fn parse_response(text: &str) -> Result<PolicyResponse, PolicyError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| PolicyError::InvalidResponse(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| PolicyError::InvalidResponse("missing choices[0].message.content".into()))?;
    let tokens = value
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .unwrap_or_else(|| word_count(content) as u64);
    Ok(PolicyResponse {
        raw_text: content.to_string(),
        tokens_emitted: tokens,
    })
}

#[async_trait]
impl PolicyBackend for HttpBackend {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let body = self.request_body(request);
        let mut attempt = 0;
        loop {
            match self.attempt(&body).await {
                Ok(r) => return Ok(r),
                Err((true, e)) if attempt < self.config.max_retries => {
                    let wait = self.config.backoff_base * 2u32.pow(attempt);
                    tracing::warn!(error = %e, attempt, "policy request failed, retrying");
                    self.clock.sleep(wait).await;
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}
