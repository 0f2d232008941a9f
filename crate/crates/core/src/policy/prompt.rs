use std::fmt::Write as _;

use crate::codec::{serialize_action, serialize_observation, RETRIEVE_SENTINEL};
use crate::model::{Decision, ObservationEvent, Profile, ReasoningTrace, ToolSpec, TurnRecord};

use super::{Phase, PolicyError};

pub const DEFAULT_HISTORY_BUDGET: usize = 32_768;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    /// Character budget for rendered history; the current turn is always kept.
    pub history_budget: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            history_budget: DEFAULT_HISTORY_BUDGET,
        }
    }
}

/// Everything a think or act prompt is conditioned on.
#[derive(Debug, Clone, Copy)]
pub struct PromptInput<'a> {
    pub profile: &'a Profile,
    pub history: &'a [TurnRecord],
    pub observations: &'a [ObservationEvent],
    /// Decisions already taken in the current turn (tool rounds).
    pub progress: &'a [Decision],
    pub local_tools: &'a [ToolSpec],
    pub phase: Phase,
    pub reasoning: Option<&'a ReasoningTrace>,
    pub retrieval_enabled: bool,
    pub options: PromptOptions,
}

fn render_params(spec: &ToolSpec) -> String {
    spec.parameters
        .iter()
        .map(|p| {
            let mut s = format!("{} ({}", p.name, p.kind.as_str());
            if let Some(values) = &p.enum_values {
                let _ = write!(s, ": {}", values.join(", "));
            }
            if !p.required {
                s.push_str(", optional");
            }
            s.push(')');
            s
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders tool specs in the given order. Empty input renders nothing.
pub fn render_tool_section(tools: &[&ToolSpec]) -> String {
    if tools.is_empty() {
        return String::new();
    }
    let mut out = String::from("## Tools\n");
    for spec in tools {
        let _ = writeln!(out, "- name: {}", spec.name);
        let _ = writeln!(out, "  description: {}", spec.description);
        if !spec.parameters.is_empty() {
            let _ = writeln!(out, "  parameters: {}", render_params(spec));
        }
    }
    out
}

fn render_observations(out: &mut String, events: &[ObservationEvent]) {
    let mut feedback = Vec::new();
    for event in events {
        match event {
            ObservationEvent::UserInput { text, .. } => {
                flush_feedback(out, &mut feedback);
                let _ = writeln!(out, "user: {text}");
            }
            ObservationEvent::EnvFeedback { .. } => feedback.push(event.clone()),
        }
    }
    flush_feedback(out, &mut feedback);
}

fn flush_feedback(out: &mut String, feedback: &mut Vec<ObservationEvent>) {
    if !feedback.is_empty() {
        let block = serialize_observation(feedback).expect("only feedback events are buffered");
        let _ = writeln!(out, "observation: {block}");
        feedback.clear();
    }
}

fn render_decision(out: &mut String, decision: &Decision) {
    let _ = writeln!(out, "assistant: {}", serialize_action(&decision.action));
    if let Some(f) = &decision.followup_action {
        let _ = writeln!(out, "assistant: {}", serialize_action(f));
    }
    render_observations(out, &decision.tool_results);
}

fn render_turn(index: usize, record: &TurnRecord) -> String {
    let mut out = format!("[turn {}]\n", index + 1);
    render_observations(&mut out, &record.observations);
    for d in record.decisions() {
        render_decision(&mut out, d);
    }
    out
}

/// Renders the prompt for one policy call.
///
/// Sections appear in a fixed order: profile, tools, retrieval hint, history
/// (oldest first, trimmed from the oldest end to the character budget),
/// current turn, reasoning (act only), instruction.
pub fn render_prompt(input: &PromptInput<'_>) -> Result<String, PolicyError> {
    if input.phase == Phase::Act && input.reasoning.is_none() {
        return Err(PolicyError::MissingReasoning);
    }
    let mut out = String::new();

    let attrs = input.profile.static_attrs();
    if !attrs.is_empty() {
        out.push_str("## Profile\n");
        for (k, v) in attrs {
            let _ = writeln!(out, "{k}: {v}");
        }
        out.push('\n');
    }

    let tools: Vec<&ToolSpec> = input.local_tools.iter().collect();
    let section = render_tool_section(&tools);
    if !section.is_empty() {
        out.push_str(&section);
        out.push('\n');
    }
    if input.retrieval_enabled {
        let _ = writeln!(
            out,
            "If the listed tools cannot complete the request, answer with exactly {RETRIEVE_SENTINEL} to ask for more tools.\n"
        );
    }

    let mut kept: Vec<String> = Vec::new();
    let mut used = 0;
    for (i, record) in input.history.iter().enumerate().rev() {
        let block = render_turn(i, record);
        if used + block.len() > input.options.history_budget {
            break;
        }
        used += block.len();
        kept.push(block);
    }
    if !kept.is_empty() {
        out.push_str("## History\n");
        for block in kept.iter().rev() {
            out.push_str(block);
        }
        out.push('\n');
    }

    out.push_str("## Current\n");
    render_observations(&mut out, input.observations);
    for d in input.progress {
        render_decision(&mut out, d);
    }
    out.push('\n');

    match input.phase {
        Phase::Think => out.push_str(
            "## Instruction\nReason step by step about what the user needs and which tool, if any, serves it. Output only the reasoning.\n",
        ),
        Phase::Act => {
            let trace = input.reasoning.expect("checked above");
            let _ = writeln!(out, "## Reasoning\n{}\n", trace.text);
            out.push_str(
                "## Instruction\nFollowing the reasoning, either reply to the user or output a JSON array of tool calls [{\"name\": ..., \"arguments\": {...}}].\n",
            );
        }
        Phase::Auxiliary => {}
    }
    Ok(out)
}
