use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use futures::future::join_all;
use thiserror::Error;

use crate::clock::SharedClock;
use crate::model::{ArgValue, ObservationEvent, ToolCall};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool execution failed: {0}")]
    ExecutionFailed(String),
}

#[async_trait]
pub trait ToolExecutor: Send + Sync {
    async fn execute(&self, call: &ToolCall) -> Result<ArgValue, ToolError>;
}

/// Maps tool names to executors.
#[derive(Clone, Default)]
pub struct ToolExecutorRegistry {
    executors: HashMap<String, Arc<dyn ToolExecutor>>,
}

impl ToolExecutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        executor: Arc<dyn ToolExecutor>,
    ) -> &mut Self {
        self.executors.insert(name.into(), executor);
        self
    }

    pub fn with(mut self, name: impl Into<String>, executor: impl ToolExecutor + 'static) -> Self {
        self.register(name, Arc::new(executor));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn ToolExecutor>> {
        self.executors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.executors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.executors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.executors.is_empty()
    }
}

async fn execute_one(call: &ToolCall, registry: &ToolExecutorRegistry) -> ObservationEvent {
    let outcome = match registry.get(&call.name) {
        None => Err(ToolError::UnknownTool(call.name.clone())),
        Some(executor) => executor.execute(call).await,
    };
    match outcome {
        Ok(result) => ObservationEvent::feedback(&call.name, result),
        Err(e) => ObservationEvent::tool_error(&call.name, e.to_string()),
    }
}

/// Executes all calls concurrently. Results come back in call order; failures
/// become error-payload feedback and never affect sibling calls.
pub async fn execute_calls(
    calls: &[ToolCall],
    registry: &ToolExecutorRegistry,
) -> Vec<ObservationEvent> {
    join_all(calls.iter().map(|c| execute_one(c, registry))).await
}

/// Returns a fixed payload.
pub struct StaticExecutor(pub ArgValue);

#[async_trait]
impl ToolExecutor for StaticExecutor {
    async fn execute(&self, _call: &ToolCall) -> Result<ArgValue, ToolError> {
        Ok(self.0.clone())
    }
}

type ToolFn = dyn Fn(&ToolCall) -> Result<ArgValue, String> + Send + Sync;

/// Computes the payload from the call with a plain function.
pub struct FnExecutor(Box<ToolFn>);

impl FnExecutor {
    pub fn new(f: impl Fn(&ToolCall) -> Result<ArgValue, String> + Send + Sync + 'static) -> Self {
        Self(Box::new(f))
    }
}

#[async_trait]
impl ToolExecutor for FnExecutor {
    async fn execute(&self, call: &ToolCall) -> Result<ArgValue, ToolError> {
        (self.0)(call).map_err(ToolError::ExecutionFailed)
    }
}

/// Sleeps on the clock before delegating.
pub struct DelayExecutor<E> {
    pub inner: E,
    pub delay: Duration,
    pub clock: SharedClock,
}

#[async_trait]
impl<E: ToolExecutor> ToolExecutor for DelayExecutor<E> {
    async fn execute(&self, call: &ToolCall) -> Result<ArgValue, ToolError> {
        self.clock.sleep(self.delay).await;
        self.inner.execute(call).await
    }
}

/// Per-tool queues of canned payloads, consumed in order.
#[derive(Clone, Default)]
pub struct ScriptedExecutor {
    queues: Arc<Mutex<HashMap<String, VecDeque<ArgValue>>>>,
}

impl ScriptedExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, tool: impl Into<String>, payload: ArgValue) {
        self.queues
            .lock()
            .expect("queue lock")
            .entry(tool.into())
            .or_default()
            .push_back(payload);
    }

    /// Builds from a JSON object mapping tool names to arrays of payloads.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let serde_json::Value::Object(map) = value else {
            return Err("tool results must be a JSON object".into());
        };
        let this = Self::new();
        for (name, payloads) in map {
            let serde_json::Value::Array(items) = payloads else {
                return Err(format!("payloads for `{name}` must be an array"));
            };
            for item in items {
                let payload = ArgValue::from_json(item)
                    .ok_or_else(|| format!("null payload for `{name}`"))?;
                this.push(name.clone(), payload);
            }
        }
        Ok(this)
    }

    pub fn tool_names(&self) -> Vec<String> {
        let mut names: Vec<_> = self
            .queues
            .lock()
            .expect("queue lock")
            .keys()
            .cloned()
            .collect();
        names.sort();
        names
    }

    /// Registers this executor under every tool name it has payloads for.
    pub fn register_all(&self, registry: &mut ToolExecutorRegistry) {
        for name in self.tool_names() {
            registry.register(name, Arc::new(self.clone()));
        }
    }
}

#[async_trait]
impl ToolExecutor for ScriptedExecutor {
    async fn execute(&self, call: &ToolCall) -> Result<ArgValue, ToolError> {
        self.queues
            .lock()
            .expect("queue lock")
            .get_mut(&call.name)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                ToolError::ExecutionFailed(format!("no scripted result left for `{}`", call.name))
            })
    }
}

/// Posts `{"name", "arguments"}` to a URL and returns the JSON response body.
pub struct HttpToolExecutor {
    url: String,
    client: reqwest::Client,
}

impl HttpToolExecutor {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl ToolExecutor for HttpToolExecutor {
    async fn execute(&self, call: &ToolCall) -> Result<ArgValue, ToolError> {
        let failed = |e: String| ToolError::ExecutionFailed(e);
        let response = self
            .client
            .post(&self.url)
            .json(call)
            .send()
            .await
            .map_err(|e| failed(e.to_string()))?;
        let status = response.status();
        let body: serde_json::Value = response.json().await.map_err(|e| failed(e.to_string()))?;
        if !status.is_success() {
            return Err(failed(format!("status {status}: {body}")));
        }
        ArgValue::from_json(body).ok_or_else(|| failed("null response".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn scripted_queue_order() {
        let ex = ScriptedExecutor::from_json(r#"{"f": [1, 2]}"#).unwrap();
        let mut reg = ToolExecutorRegistry::new();
        ex.register_all(&mut reg);
        let call = ToolCall::new("f");
        let out = execute_calls(&[call.clone(), call.clone(), call], &reg).await;
        assert_eq!(out[0], ObservationEvent::feedback("f", ArgValue::int(1)));
        assert_eq!(out[1], ObservationEvent::feedback("f", ArgValue::int(2)));
        assert!(out[2].is_error());
    }

    #[tokio::test]
    async fn fn_executor_errors_inline() {
        let reg = ToolExecutorRegistry::new().with("bad", FnExecutor::new(|_| Err("boom".into())));
        let out = execute_calls(&[ToolCall::new("bad")], &reg).await;
        assert_eq!(
            out,
            vec![ObservationEvent::tool_error(
                "bad",
                "tool execution failed: boom"
            )]
        );
    }
}
