//! Think/act policy backends behind one interface, plus prompt rendering.

mod http;
mod prompt;
mod scripted;

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig, ENV_API_KEY, ENV_ENDPOINT_URL, ENV_MODEL};
pub use prompt::{
    render_prompt, render_tool_section, PromptInput, PromptOptions, DEFAULT_HISTORY_BUDGET,
};
pub use scripted::{ScriptStep, ScriptedBackend};

use crate::clock::SharedClock;
use crate::model::{word_count, ReasoningTrace, ToolSpec};
use crate::tool_space::{CandidateProposal, CandidateProposer, GlobalToolPool, ToolSpaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Think,
    Act,
    /// Requests from auxiliary models (candidate proposer, data generation).
    Auxiliary,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Think => "think",
            Phase::Act => "act",
            Phase::Auxiliary => "auxiliary",
        })
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("script exhausted after {0} steps")]
    ScriptExhausted(usize),
    #[error("script step {index} is a {expected} step but a {got} request arrived")]
    ScriptPhaseMismatch {
        index: usize,
        expected: Phase,
        got: Phase,
    },
    #[error("act request rendered without a reasoning trace")]
    MissingReasoning,
    #[error("http status {status}: {body}")]
    HttpError { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response shape: {0}")]
    InvalidResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub phase: Phase,
    pub rendered_context: String,
    pub local_tools: Vec<ToolSpec>,
    /// Whether the retrieval sentinel was offered to the model.
    #[serde(default)]
    pub retrieval_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResponse {
    pub raw_text: String,
    pub tokens_emitted: u64,
}

impl PolicyResponse {
    /// Response whose token count is the whitespace-token estimate.
    pub fn estimated(raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let tokens_emitted = word_count(&raw_text) as u64;
        Self {
            raw_text,
            tokens_emitted,
        }
    }
}

#[async_trait]
pub trait PolicyBackend: Send + Sync {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError>;
}

#[async_trait]
impl<T: PolicyBackend + ?Sized> PolicyBackend for Arc<T> {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        (**self).invoke(request).await
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub request: PolicyRequest,
    pub started: f64,
    pub finished: f64,
    pub response: Option<String>,
}

/// Passes requests through to an inner backend and keeps a log of them.
pub struct RecordingBackend<B> {
    inner: B,
    clock: SharedClock,
    log: Mutex<Vec<RecordedCall>>,
}

impl<B: PolicyBackend> RecordingBackend<B> {
    pub fn new(inner: B, clock: SharedClock) -> Self {
        Self {
            inner,
            clock,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.log.lock().expect("log lock").clone()
    }
}

#[async_trait]
impl<B: PolicyBackend> PolicyBackend for RecordingBackend<B> {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let started = self.clock.now();
        let result = self.inner.invoke(request).await;
        self.log.lock().expect("log lock").push(RecordedCall {
            request: request.clone(),
            started,
            finished: self.clock.now(),
            response: result.as_ref().ok().map(|r| r.raw_text.clone()),
        });
        result
    }
}

/// Candidate proposer backed by a language model.
///
/// The model sees the reasoning and the whole pool and must answer with a JSON
/// array of tool names; names outside the pool are dropped.
pub struct LlmProposer {
    backend: Arc<dyn PolicyBackend>,
}

impl LlmProposer {
    pub fn new(backend: Arc<dyn PolicyBackend>) -> Self {
        Self { backend }
    }

    pub fn render(reasoning: &ReasoningTrace, pool: &GlobalToolPool, k: usize) -> String {
        let specs: Vec<&ToolSpec> = pool.iter().map(|(_, s)| s).collect();
        format!(
            "You select tools for an assistant.\n\n{}\n## Assistant reasoning\n{}\n\n## Task\nList up to {k} tool names from the catalogue that the assistant needs. Answer with a JSON array of names only.\n",
            render_tool_section(&specs),
            reasoning.text
        )
    }

    pub fn parse(text: &str, pool: &GlobalToolPool, k: usize) -> CandidateProposal {
        let names = text
            .find('[')
            .and_then(|start| {
                serde_json::Deserializer::from_str(&text[start..])
                    .into_iter::<Vec<String>>()
                    .next()
                    .and_then(Result::ok)
            })
            .unwrap_or_default();
        let mut proposal = CandidateProposal::default();
        for (rank, name) in names.iter().enumerate() {
            if proposal.ids.len() == k {
                break;
            }
            match pool.resolve(name.trim()) {
                Some(id) => {
                    if proposal.ids.insert(id) {
                        proposal.scores.insert(id, 1.0 / (rank as f64 + 1.0));
                    }
                }
                None => tracing::warn!(name = %name, "proposer named a tool outside the pool"),
            }
        }
        proposal
    }
}

#[async_trait]
impl CandidateProposer for LlmProposer {
    async fn propose(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError> {
        let request = PolicyRequest {
            phase: Phase::Auxiliary,
            rendered_context: Self::render(reasoning, pool, k),
            local_tools: Vec::new(),
            retrieval_enabled: false,
        };
        let response = self
            .backend
            .invoke(&request)
            .await
            .map_err(|e| ToolSpaceError::Proposer(e.to_string()))?;
        Ok(Self::parse(&response.raw_text, pool, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;

    #[tokio::test]
    async fn llm_proposer_parses_names() {
        let pool = GlobalToolPool::from_specs([
            ToolSpec::new("a", "x"),
            ToolSpec::new("b", "y"),
            ToolSpec::new("c", "z"),
        ])
        .unwrap();
        let backend = ScriptedBackend::new(
            vec![ScriptStep::new(
                Phase::Auxiliary,
                r#"Sure: ["c", "nope", "a", "b"]"#,
            )],
            VirtualClock::shared(),
        );
        let proposer = LlmProposer::new(Arc::new(backend));
        let p = proposer
            .propose(&ReasoningTrace::new("r"), &pool, 2)
            .await
            .unwrap();
        assert_eq!(
            p.ids,
            [pool.resolve("c").unwrap(), pool.resolve("a").unwrap()]
                .into_iter()
                .collect()
        );
    }

    #[test]
    fn estimated_tokens() {
        assert_eq!(PolicyResponse::estimated("a b  c").tokens_emitted, 3);
    }
}
