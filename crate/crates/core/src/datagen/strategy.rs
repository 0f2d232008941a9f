//! Strategy interfaces for the trace pipeline and their stock implementations.
//!
//! Strategies return raw model text; the pipeline validates its shape.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;

use super::DatagenError;
use crate::model::ReasoningTrace;
use crate::policy::{Phase, PolicyBackend, PolicyRequest};

/// The previous failed attempt, offered to generators that want it.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorAttempt {
    pub raw: String,
    pub trace: Option<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest<'a> {
    pub query: &'a str,
    pub answer: &'a str,
    /// 1-based attempt number.
    pub attempt: u32,
    pub prior: Option<&'a PriorAttempt>,
}

#[async_trait]
pub trait TraceGenerator: Send + Sync {
    async fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, DatagenError>;
}

#[async_trait]
pub trait TraceScorer: Send + Sync {
    async fn score(
        &self,
        query: &str,
        answer: &str,
        trace: &ReasoningTrace,
    ) -> Result<String, DatagenError>;
}

#[async_trait]
pub trait TraceRefiner: Send + Sync {
    async fn refine(&self, trace: &ReasoningTrace) -> Result<String, DatagenError>;
}

#[async_trait]
pub trait TraceCompressor: Send + Sync {
    async fn compress(
        &self,
        trace: &ReasoningTrace,
        answer: Option<&str>,
        word_limit: usize,
    ) -> Result<String, DatagenError>;
}

#[async_trait]
pub trait NecessityScorer: Send + Sync {
    async fn assess(&self, query: &str) -> Result<String, DatagenError>;
}

/// Encodes text in the single-line `{"think": ...}` shape.
pub fn think_line(text: &str) -> String {
    serde_json::json!({ "think": text }).to_string()
}

/// What a strategy is being asked to do; handed to [`FnStrategy`] closures.
#[derive(Debug, Clone, Copy)]
pub enum StrategyCall<'a> {
    Generate(&'a GenerationRequest<'a>),
    Score {
        query: &'a str,
        answer: &'a str,
        trace: &'a ReasoningTrace,
    },
    Refine(&'a ReasoningTrace),
    Compress {
        trace: &'a ReasoningTrace,
        answer: Option<&'a str>,
        word_limit: usize,
    },
    Necessity(&'a str),
}

/// Stub implementing every strategy with one closure, counting calls.
pub struct FnStrategy<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnStrategy<F>
where
    F: Fn(StrategyCall<'_>) -> String + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn call(&self, c: StrategyCall<'_>) -> Result<String, DatagenError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok((self.f)(c))
    }
}

#[async_trait]
impl<F: Fn(StrategyCall<'_>) -> String + Send + Sync> TraceGenerator for FnStrategy<F> {
    async fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, DatagenError> {
        self.call(StrategyCall::Generate(request))
    }
}

#[async_trait]
impl<F: Fn(StrategyCall<'_>) -> String + Send + Sync> TraceScorer for FnStrategy<F> {
    async fn score(
        &self,
        query: &str,
        answer: &str,
        trace: &ReasoningTrace,
    ) -> Result<String, DatagenError> {
        self.call(StrategyCall::Score {
            query,
            answer,
            trace,
        })
    }
}

#[async_trait]
impl<F: Fn(StrategyCall<'_>) -> String + Send + Sync> TraceRefiner for FnStrategy<F> {
    async fn refine(&self, trace: &ReasoningTrace) -> Result<String, DatagenError> {
        self.call(StrategyCall::Refine(trace))
    }
}

#[async_trait]
impl<F: Fn(StrategyCall<'_>) -> String + Send + Sync> TraceCompressor for FnStrategy<F> {
    async fn compress(
        &self,
        trace: &ReasoningTrace,
        answer: Option<&str>,
        word_limit: usize,
    ) -> Result<String, DatagenError> {
        self.call(StrategyCall::Compress {
            trace,
            answer,
            word_limit,
        })
    }
}

#[async_trait]
impl<F: Fn(StrategyCall<'_>) -> String + Send + Sync> NecessityScorer for FnStrategy<F> {
    async fn assess(&self, query: &str) -> Result<String, DatagenError> {
        self.call(StrategyCall::Necessity(query))
    }
}

/// Stub replaying a queue of raw outputs, whatever it is asked.
#[derive(Default)]
pub struct ScriptedStrategy {
    outputs: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl ScriptedStrategy {
    pub fn new<I, S>(outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            outputs: Mutex::new(outputs.into_iter().map(Into::into).collect()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Scores rendered as `{"score": x}` lines.
    pub fn scores(scores: impl IntoIterator<Item = f64>) -> Self {
        Self::new(
            scores
                .into_iter()
                .map(|s| serde_json::json!({ "score": s }).to_string()),
        )
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next(&self) -> Result<String, DatagenError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.outputs
            .lock()
            .expect("queue lock")
            .pop_front()
            .ok_or_else(|| DatagenError::Strategy("scripted strategy exhausted".into()))
    }
}

#[async_trait]
impl TraceGenerator for ScriptedStrategy {
    async fn generate(&self, _request: &GenerationRequest<'_>) -> Result<String, DatagenError> {
        self.next()
    }
}

#[async_trait]
impl TraceScorer for ScriptedStrategy {
    async fn score(&self, _q: &str, _a: &str, _t: &ReasoningTrace) -> Result<String, DatagenError> {
        self.next()
    }
}

#[async_trait]
impl TraceRefiner for ScriptedStrategy {
    async fn refine(&self, _trace: &ReasoningTrace) -> Result<String, DatagenError> {
        self.next()
    }
}

#[async_trait]
impl TraceCompressor for ScriptedStrategy {
    async fn compress(
        &self,
        _t: &ReasoningTrace,
        _a: Option<&str>,
        _limit: usize,
    ) -> Result<String, DatagenError> {
        self.next()
    }
}

#[async_trait]
impl NecessityScorer for ScriptedStrategy {
    async fn assess(&self, _query: &str) -> Result<String, DatagenError> {
        self.next()
    }
}

/// Deterministic offline stub: templated traces, a fixed score, first-N-words
/// compression and a keyword-based necessity guess.
#[derive(Debug, Clone)]
pub struct TemplateStub {
    pub score: f64,
}

impl Default for TemplateStub {
    fn default() -> Self {
        Self { score: 8.0 }
    }
}

impl TemplateStub {
    fn respond(&self, call: StrategyCall<'_>) -> String {
        match call {
            StrategyCall::Generate(r) => think_line(&format!(
                "The user asks: {}. The reply should lead to: {}.",
                r.query.trim(),
                r.answer.trim()
            )),
            StrategyCall::Score { .. } => {
                serde_json::json!({ "score": self.score, "reason": "template stub" }).to_string()
            }
            StrategyCall::Refine(t) => think_line(&t.text),
            StrategyCall::Compress {
                trace, word_limit, ..
            } => {
                let words: Vec<&str> = trace.text.split_whitespace().take(word_limit).collect();
                think_line(&words.join(" "))
            }
            StrategyCall::Necessity(q) => {
                let q = q.to_lowercase();
                let hints = [
                    "weather", "price", "book", "search", "latest", "today", "order", "schedule",
                ];
                let n = if hints.iter().any(|h| q.contains(h)) {
                    4
                } else {
                    1
                };
                serde_json::json!({ "tool_necessity": n }).to_string()
            }
        }
    }
}

macro_rules! delegate_stub {
    ($ty:ty) => {
        #[async_trait]
        impl TraceGenerator for $ty {
            async fn generate(
                &self,
                request: &GenerationRequest<'_>,
            ) -> Result<String, DatagenError> {
                Ok(self.respond(StrategyCall::Generate(request)))
            }
        }

        #[async_trait]
        impl TraceScorer for $ty {
            async fn score(
                &self,
                query: &str,
                answer: &str,
                trace: &ReasoningTrace,
            ) -> Result<String, DatagenError> {
                Ok(self.respond(StrategyCall::Score {
                    query,
                    answer,
                    trace,
                }))
            }
        }

        #[async_trait]
        impl TraceRefiner for $ty {
            async fn refine(&self, trace: &ReasoningTrace) -> Result<String, DatagenError> {
                Ok(self.respond(StrategyCall::Refine(trace)))
            }
        }

        #[async_trait]
        impl TraceCompressor for $ty {
            async fn compress(
                &self,
                trace: &ReasoningTrace,
                answer: Option<&str>,
                word_limit: usize,
            ) -> Result<String, DatagenError> {
                Ok(self.respond(StrategyCall::Compress {
                    trace,
                    answer,
                    word_limit,
                }))
            }
        }

        #[async_trait]
        impl NecessityScorer for $ty {
            async fn assess(&self, query: &str) -> Result<String, DatagenError> {
                Ok(self.respond(StrategyCall::Necessity(query)))
            }
        }
    };
}

delegate_stub!(TemplateStub);

/// Strategies backed by a language model through a policy backend.
#[derive(Clone)]
pub struct LlmStrategy {
    backend: Arc<dyn PolicyBackend>,
    pub think_max_words: usize,
}

impl LlmStrategy {
    pub fn new(backend: Arc<dyn PolicyBackend>) -> Self {
        Self {
            backend,
            think_max_words: 150,
        }
    }

    async fn ask(&self, prompt: String) -> Result<String, DatagenError> {
        let request = PolicyRequest {
            phase: Phase::Auxiliary,
            rendered_context: prompt,
            local_tools: Vec::new(),
            retrieval_enabled: false,
        };
        self.backend
            .invoke(&request)
            .await
            .map(|r| r.raw_text)
            .map_err(|e| DatagenError::Strategy(e.to_string()))
    }
}

#[async_trait]
impl TraceGenerator for LlmStrategy {
    async fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, DatagenError> {
        let mut prompt = format!(
            "Write the hidden reasoning an assistant would go through before giving the answer below.\n\
             Work forward from the question; do not mention that the answer was provided.\n\
             Use a handful of short steps and no more than {} words.\n\n\
             Question: {}\nAnswer: {}\n",
            self.think_max_words,
            r.query.trim(),
            r.answer.trim()
        );
        if let Some(prior) = r.prior {
            prompt.push_str(&format!(
                "\nAn earlier attempt was rejected{}:\n{}\n",
                prior
                    .score
                    .map(|s| format!(" with score {s}"))
                    .unwrap_or_default(),
                prior.trace.as_deref().unwrap_or(&prior.raw)
            ));
        }
        prompt.push_str("\nReply with a single line of JSON: {\"think\": \"...\"}\n");
        self.ask(prompt).await
    }
}

#[async_trait]
impl TraceScorer for LlmStrategy {
    async fn score(
        &self,
        query: &str,
        answer: &str,
        trace: &ReasoningTrace,
    ) -> Result<String, DatagenError> {
        self.ask(format!(
            "Grade the reasoning on a 0 to 10 scale: correctness 0-4, relevance 0-2, clarity 0-2, \
             completeness 0-1, brevity 0-1. Add the parts for the total.\n\n\
             Question: {}\nAnswer: {}\nReasoning: {}\n\n\
             Reply with JSON only: {{\"score\": <number>, \"reason\": \"<one sentence>\"}}\n",
            query.trim(),
            answer.trim(),
            trace.text
        ))
        .await
    }
}

#[async_trait]
impl TraceRefiner for LlmStrategy {
    async fn refine(&self, trace: &ReasoningTrace) -> Result<String, DatagenError> {
        self.ask(format!(
            "Tighten the wording of this reasoning. Keep every step and its order; remove filler only.\n\n\
             Reasoning: {}\n\nReply with a single line of JSON: {{\"think\": \"...\"}}\n",
            trace.text
        ))
        .await
    }
}

#[async_trait]
impl TraceCompressor for LlmStrategy {
    async fn compress(
        &self,
        trace: &ReasoningTrace,
        answer: Option<&str>,
        word_limit: usize,
    ) -> Result<String, DatagenError> {
        let answer = answer
            .map(|a| format!("Tool call: {a}\n"))
            .unwrap_or_default();
        self.ask(format!(
            "Shorten this reasoning to at most {word_limit} words. Keep the cause-and-effect chain, name the \
             chosen tool and say where each argument comes from. Add nothing new.\n\n\
             Reasoning: {}\n{answer}\nReply with a single line of JSON: {{\"think\": \"...\"}}\n",
            trace.text
        ))
        .await
    }
}

#[async_trait]
impl NecessityScorer for LlmStrategy {
    async fn assess(&self, query: &str) -> Result<String, DatagenError> {
        self.ask(format!(
            "Rate how much this request needs an external tool (live data, actions, or exact computation) \
             instead of the model's own knowledge: 4 certainly, 3 probably, 2 maybe, 1 probably not, \
             0 certainly not.\n\nRequest: {}\n\nReply with JSON only: {{\"tool_necessity\": <0-4>}}\n",
            query.trim()
        ))
        .await
    }
}
