//! The turn loop: think, then act and propose side by side, then expand the
//! local tool set if the agent asked for more tools and decide again.

mod executor;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use executor::{
    execute_calls, DelayExecutor, FnExecutor, HttpToolExecutor, ScriptedExecutor, StaticExecutor,
    ToolError, ToolExecutor, ToolExecutorRegistry,
};

use crate::clock::SharedClock;
use crate::codec::{parse_assistant_output_with, split_think, CodecConfig, CodecError};
use crate::io::{read_jsonl, write_jsonl, IoError};
use crate::model::{
    AgentAction, Decision, ModelError, ObservationEvent, PassMarks, ReasoningTrace, SessionState,
    ToolCall, ToolSpec, TurnRecord, TurnTiming,
};
use crate::policy::{
    render_prompt, Phase, PolicyBackend, PolicyError, PolicyRequest, PromptInput, PromptOptions,
    DEFAULT_HISTORY_BUDGET,
};
use crate::tool_space::{
    propose_candidates, update_local, CandidateProposal, CandidateProposer, GlobalToolPool,
    LocalToolSet, ToolSpaceError,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("a turn needs at least one observation")]
    NoObservations,
    #[error("run_tool_calls needs at least one call")]
    NoToolCalls,
    #[error("retrieval requested more than {limit} consecutive times")]
    RetrieveLoopExceeded { limit: u32 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    ToolSpace(#[from] ToolSpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnConfig {
    /// Consecutive retrieval actions tolerated within one decision.
    pub max_retrieves: u32,
    /// Candidate cap handed to the proposer.
    pub k: usize,
    /// Tool-executing decisions allowed per turn (at least one always runs).
    pub max_tool_rounds: usize,
    /// Whether the retrieval sentinel is offered in prompts.
    pub retrieval_enabled: bool,
    pub history_budget: usize,
    pub codec: CodecConfig,
    pub max_turns: Option<usize>,
}

impl Default for TurnConfig {
    fn default() -> Self {
        Self {
            max_retrieves: 2,
            k: 5,
            max_tool_rounds: 4,
            retrieval_enabled: true,
            history_budget: DEFAULT_HISTORY_BUDGET,
            codec: CodecConfig::default(),
            max_turns: None,
        }
    }
}

#[derive(Clone)]
pub struct PolicyBackendSet {
    pub think: Arc<dyn PolicyBackend>,
    pub act: Arc<dyn PolicyBackend>,
    pub proposer: Arc<dyn CandidateProposer>,
}

impl PolicyBackendSet {
    /// One backend serving both phases.
    pub fn single(backend: Arc<dyn PolicyBackend>, proposer: Arc<dyn CandidateProposer>) -> Self {
        Self {
            think: backend.clone(),
            act: backend,
            proposer,
        }
    }
}

/// Borrowed inputs shared by every pass of a turn.
struct TurnCtx<'a> {
    session: &'a SessionState,
    observations: &'a [ObservationEvent],
    pool: &'a GlobalToolPool,
    backends: &'a PolicyBackendSet,
    registry: &'a ToolExecutorRegistry,
    config: &'a TurnConfig,
    clock: &'a SharedClock,
}

struct PassOutcome {
    reasoning: ReasoningTrace,
    action: AgentAction,
    marks: PassMarks,
    think_tokens: u64,
    act_tokens: u64,
    /// Present only when the action was a retrieval.
    proposal: Option<CandidateProposal>,
}

impl TurnCtx<'_> {
    fn prompt(
        &self,
        phase: Phase,
        tools: &[ToolSpec],
        progress: &[Decision],
        reasoning: Option<&ReasoningTrace>,
    ) -> Result<String, PolicyError> {
        render_prompt(&PromptInput {
            profile: &self.session.profile,
            history: &self.session.history,
            observations: self.observations,
            progress,
            local_tools: tools,
            phase,
            reasoning,
            retrieval_enabled: self.config.retrieval_enabled,
            options: PromptOptions {
                history_budget: self.config.history_budget,
            },
        })
    }

    fn request(&self, phase: Phase, rendered_context: String, tools: &[ToolSpec]) -> PolicyRequest {
        PolicyRequest {
            phase,
            rendered_context,
            local_tools: tools.to_vec(),
            retrieval_enabled: self.config.retrieval_enabled,
        }
    }

    async fn think(
        &self,
        tools: &[ToolSpec],
        progress: &[Decision],
    ) -> Result<(ReasoningTrace, u64), OrchestratorError> {
        let prompt = self.prompt(Phase::Think, tools, progress, None)?;
        let response = self
            .backends
            .think
            .invoke(&self.request(Phase::Think, prompt, tools))
            .await?;
        let (inner, rest) = split_think(&response.raw_text, &self.config.codec);
        let text = inner.unwrap_or(rest).trim();
        Ok((ReasoningTrace::new(text), response.tokens_emitted))
    }

    async fn act(
        &self,
        tools: &[ToolSpec],
        progress: &[Decision],
        reasoning: &ReasoningTrace,
    ) -> Result<(AgentAction, u64), OrchestratorError> {
        let prompt = self.prompt(Phase::Act, tools, progress, Some(reasoning))?;
        let response = self
            .backends
            .act
            .invoke(&self.request(Phase::Act, prompt, tools))
            .await?;
        let parsed = parse_assistant_output_with(&response.raw_text, &self.config.codec)?;
        Ok((parsed.action, response.tokens_emitted))
    }

    /// One think pass followed by act and propose running concurrently.
    ///
    /// The proposer is dropped as soon as the act result turns out not to be a
    /// retrieval. Otherwise the pass waits for it and the extra wait is
    /// recorded as waiting overhead.
    async fn pass(
        &self,
        local: &LocalToolSet,
        progress: &[Decision],
    ) -> Result<PassOutcome, OrchestratorError> {
        let tools: Vec<ToolSpec> = self.pool.specs(&local.ids)?.into_iter().cloned().collect();
        let clock = self.clock;

        let think_start = clock.now();
        let (reasoning, think_tokens) = self.think(&tools, progress).await?;
        let think_finish = clock.now();

        let act_fut = async {
            let start = clock.now();
            let out = self.act(&tools, progress, &reasoning).await;
            (start, out, clock.now())
        };
        let propose_fut = async {
            let start = clock.now();
            let out = propose_candidates(
                &reasoning,
                self.pool,
                self.config.k,
                self.backends.proposer.as_ref(),
            )
            .await;
            (start, out, clock.now())
        };
        tokio::pin!(act_fut, propose_fut);

        let mut proposed = None;
        let (act_start, act_out, act_finish) = loop {
            tokio::select! {
                biased;
                done = &mut act_fut => break done,
                done = &mut propose_fut, if proposed.is_none() => proposed = Some(done),
            }
        };
        let (action, act_tokens) = act_out?;

        let mut marks = PassMarks {
            think_start,
            think_finish,
            act_start,
            act_finish,
            propose_start: None,
            propose_finish: None,
        };
        let proposal = if action.is_retrieve() {
            let (start, out, finish) = match proposed {
                Some(done) => done,
                None => propose_fut.await,
            };
            marks.propose_start = Some(start);
            marks.propose_finish = Some(finish);
            let mut proposal = out?;
            proposal.propose_duration = finish - start;
            Some(proposal)
        } else {
            None
        };

        Ok(PassOutcome {
            reasoning: reasoning.clone(),
            action,
            marks,
            think_tokens,
            act_tokens,
            proposal,
        })
    }

    /// Runs passes until the action is not a retrieval, expanding the local
    /// set after each retrieval, then executes any tool calls.
    async fn decide(
        &self,
        local: &mut LocalToolSet,
        progress: &[Decision],
    ) -> Result<Decision, OrchestratorError> {
        let start = self.clock.now();
        let mut passes = vec![self.pass(local, progress).await?];
        let mut added = BTreeSet::new();
        let mut retrieves = 0;
        let mut timing = TurnTiming::default();

        loop {
            let last = passes.last().expect("at least one pass");
            let Some(proposal) = &last.proposal else {
                break;
            };
            retrieves += 1;
            if retrieves > self.config.max_retrieves {
                return Err(OrchestratorError::RetrieveLoopExceeded {
                    limit: self.config.max_retrieves,
                });
            }
            added.extend(proposal.ids.difference(&local.ids).copied());
            timing.propose_duration += proposal.propose_duration;
            timing.waiting_overhead += (last
                .marks
                .propose_finish
                .expect("retrieval passes wait for the proposer")
                - last.marks.act_finish)
                .max(0.0);
            *local = update_local(local, &last.action, proposal, self.pool)?;
            passes.push(self.pass(local, progress).await?);
        }

        for p in &passes {
            timing.think_duration += p.marks.think_finish - p.marks.think_start;
            timing.act_duration += p.marks.act_finish - p.marks.act_start;
            timing.tokens_think += p.think_tokens;
            timing.tokens_answer += p.act_tokens;
        }

        let mut passes = passes.into_iter();
        let first = passes.next().expect("at least one pass");
        let followup = passes.last();
        timing.passes.push(first.marks);
        let (followup_reasoning, followup_action) = match followup {
            Some(f) => {
                timing.passes.push(f.marks);
                (Some(f.reasoning), Some(f.action))
            }
            None => (None, None),
        };

        let mut decision = Decision {
            reasoning: first.reasoning,
            action: first.action,
            followup_reasoning,
            followup_action,
            candidates_added: added,
            timing,
            tool_results: Vec::new(),
        };
        if let AgentAction::InvokeTools { calls } = decision.executed_action() {
            let calls = calls.clone();
            decision.tool_results = execute_calls(&calls, self.registry).await;
        }
        decision.timing.wall = self.clock.now() - start;
        Ok(decision)
    }
}

/// Runs one turn against `session` and appends the resulting record to it.
///
/// The session is left untouched when the turn fails.
pub async fn run_turn(
    session: &mut SessionState,
    observations: Vec<ObservationEvent>,
    pool: &GlobalToolPool,
    backends: &PolicyBackendSet,
    registry: &ToolExecutorRegistry,
    config: &TurnConfig,
    clock: &SharedClock,
) -> Result<TurnRecord, OrchestratorError> {
    if observations.is_empty() {
        return Err(OrchestratorError::NoObservations);
    }
    pool.check_ids(&session.local_tool_ids)?;

    let ctx = TurnCtx {
        session,
        observations: &observations,
        pool,
        backends,
        registry,
        config,
        clock,
    };
    let mut local = LocalToolSet {
        ids: session.local_tool_ids.clone(),
        generation: session.tool_generation,
    };
    let mut decisions: Vec<Decision> = Vec::new();
    let mut tool_rounds = 0;
    loop {
        let decision = ctx.decide(&mut local, &decisions).await?;
        let invoked = matches!(decision.executed_action(), AgentAction::InvokeTools { .. });
        decisions.push(decision);
        if !invoked {
            break;
        }
        tool_rounds += 1;
        if tool_rounds >= config.max_tool_rounds.max(1) {
            break;
        }
    }

    let mut decisions = decisions.into_iter();
    let record = TurnRecord {
        observations,
        decision: decisions.next().expect("at least one decision"),
        rounds: decisions.collect(),
    };
    session.append_turn(record.clone())?;
    session.local_tool_ids = local.ids;
    session.tool_generation = local.generation;
    Ok(record)
}

/// Executes calls concurrently, one feedback event per call in input order.
pub async fn run_tool_calls(
    calls: &[ToolCall],
    registry: &ToolExecutorRegistry,
) -> Result<Vec<ObservationEvent>, OrchestratorError> {
    if calls.is_empty() {
        return Err(OrchestratorError::NoToolCalls);
    }
    Ok(execute_calls(calls, registry).await)
}

/// Owns a session and the collaborators needed to run its turns.
pub struct Orchestrator {
    session: SessionState,
    pool: Arc<GlobalToolPool>,
    backends: PolicyBackendSet,
    registry: ToolExecutorRegistry,
    config: TurnConfig,
    clock: SharedClock,
}

impl Orchestrator {
    pub fn new(
        session: SessionState,
        pool: Arc<GlobalToolPool>,
        backends: PolicyBackendSet,
        registry: ToolExecutorRegistry,
        config: TurnConfig,
        clock: SharedClock,
    ) -> Result<Self, OrchestratorError> {
        pool.check_ids(&session.local_tool_ids)?;
        Ok(Self {
            session,
            pool,
            backends,
            registry,
            config,
            clock,
        })
    }

    pub fn session(&self) -> &SessionState {
        &self.session
    }

    pub fn into_session(self) -> SessionState {
        self.session
    }

    pub fn pool(&self) -> &GlobalToolPool {
        &self.pool
    }

    pub fn config(&self) -> &TurnConfig {
        &self.config
    }

    pub async fn run_turn(
        &mut self,
        observations: Vec<ObservationEvent>,
    ) -> Result<TurnRecord, OrchestratorError> {
        run_turn(
            &mut self.session,
            observations,
            &self.pool,
            &self.backends,
            &self.registry,
            &self.config,
            &self.clock,
        )
        .await
    }

    /// Runs one turn per input, stopping early at `config.max_turns`.
    pub async fn run_session<I>(&mut self, inputs: I) -> Result<Vec<TurnRecord>, OrchestratorError>
    where
        I: IntoIterator<Item = Vec<ObservationEvent>>,
    {
        let limit = self.config.max_turns.unwrap_or(usize::MAX);
        let mut records = Vec::new();
        for observations in inputs.into_iter().take(limit) {
            records.push(self.run_turn(observations).await?);
        }
        if records.is_empty() {
            return Err(OrchestratorError::NoObservations);
        }
        Ok(records)
    }
}

pub fn write_transcript(
    path: impl AsRef<Path>,
    records: &[TurnRecord],
) -> Result<(), OrchestratorError> {
    Ok(write_jsonl(path, records)?)
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TurnRecord>, OrchestratorError> {
    Ok(read_jsonl(path)?)
}
