//! Domain types shared by every module: tool specifications, calls and their
//! argument values, observations, reasoning traces, actions, and the session
//! state that accumulates turn records.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SHORT_TERM_CAPACITY: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("tool spec name is empty")]
    EmptyToolName,
    #[error("duplicate parameter `{param}` in tool `{tool}`")]
    DuplicateParam { tool: String, param: String },
    #[error("parameter `{param}` of tool `{tool}` has an empty or duplicated enum list")]
    InvalidEnum { tool: String, param: String },
    #[error("tool call name is empty")]
    EmptyCallName,
    #[error("invoke_tools action carries no calls")]
    EmptyInvocation,
    #[error("turn record invariant violated: {0}")]
    InvalidRecord(&'static str),
    #[error("negative duration in turn timing")]
    NegativeDuration,
}

/// Identifier of a tool registered in a [`crate::tool_space::GlobalToolPool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolId(pub u32);

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::Array => "array",
            ParamKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
            enum_values: None,
        }
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn with_enum<I, S>(mut self, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.enum_values = Some(values.into_iter().map(Into::into).collect());
        self
    }
}

/// A callable tool: one element of the global pool or of a local tool set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParamSpec>,
}

impl ToolSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters: Vec::new(),
        }
    }

    pub fn param(mut self, param: ParamSpec) -> Self {
        self.parameters.push(param);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.name.trim().is_empty() {
            return Err(ModelError::EmptyToolName);
        }
        let mut seen = BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(ModelError::DuplicateParam {
                    tool: self.name.clone(),
                    param: p.name.clone(),
                });
            }
            if let Some(values) = &p.enum_values {
                let distinct: BTreeSet<_> = values.iter().collect();
                if values.is_empty() || distinct.len() != values.len() {
                    return Err(ModelError::InvalidEnum {
                        tool: self.name.clone(),
                        param: p.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Argument value carried by a tool call or returned as a tool result.
///
/// Serialized as plain JSON. Numbers keep the representation they were parsed
/// with (`42` and `42.0` are distinct values here); numeric equivalence is the
/// judge's business.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Boolean(bool),
    Number(serde_json::Number),
    Text(String),
    List(Vec<ArgValue>),
    Map(IndexMap<String, ArgValue>),
}

impl ArgValue {
    pub fn text(s: impl Into<String>) -> Self {
        ArgValue::Text(s.into())
    }

    pub fn int(n: i64) -> Self {
        ArgValue::Number(n.into())
    }

    /// Panics on non-finite input.
    pub fn float(x: f64) -> Self {
        ArgValue::Number(serde_json::Number::from_f64(x).expect("finite number"))
    }

    pub fn map<I, K>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, ArgValue)>,
        K: Into<String>,
    {
        ArgValue::Map(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ArgValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&ArgValue> {
        match self {
            ArgValue::Map(m) => m.get(key),
            _ => None,
        }
    }

    /// Fails on JSON `null`, which has no counterpart here.
    pub fn from_json(value: serde_json::Value) -> Option<Self> {
        use serde_json::Value;
        Some(match value {
            Value::Null => return None,
            Value::Bool(b) => ArgValue::Boolean(b),
            Value::Number(n) => ArgValue::Number(n),
            Value::String(s) => ArgValue::Text(s),
            Value::Array(items) => ArgValue::List(
                items
                    .into_iter()
                    .map(ArgValue::from_json)
                    .collect::<Option<Vec<_>>>()?,
            ),
            Value::Object(map) => ArgValue::Map(
                map.into_iter()
                    .map(|(k, v)| ArgValue::from_json(v).map(|v| (k, v)))
                    .collect::<Option<IndexMap<_, _>>>()?,
            ),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            ArgValue::Boolean(b) => Value::Bool(*b),
            ArgValue::Number(n) => Value::Number(n.clone()),
            ArgValue::Text(s) => Value::String(s.clone()),
            ArgValue::List(items) => Value::Array(items.iter().map(ArgValue::to_json).collect()),
            ArgValue::Map(m) => {
                Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: IndexMap<String, ArgValue>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            arguments: IndexMap::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: ArgValue) -> Self {
        self.arguments.insert(key.into(), value);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.name.is_empty() {
            Err(ModelError::EmptyCallName)
        } else {
            Ok(())
        }
    }
}

/// One element of the observation set at a time step: either user input or
/// structured feedback returned by a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObservationEvent {
    UserInput {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        audio_ref: Option<String>,
    },
    EnvFeedback {
        tool_name: String,
        result: ArgValue,
    },
}

impl ObservationEvent {
    pub fn user(text: impl Into<String>) -> Self {
        ObservationEvent::UserInput {
            text: text.into(),
            audio_ref: None,
        }
    }

    pub fn feedback(tool_name: impl Into<String>, result: ArgValue) -> Self {
        ObservationEvent::EnvFeedback {
            tool_name: tool_name.into(),
            result,
        }
    }

    /// Feedback event describing a failed tool execution.
    pub fn tool_error(tool_name: impl Into<String>, message: impl Into<String>) -> Self {
        ObservationEvent::feedback(
            tool_name,
            ArgValue::map([("error", ArgValue::text(message))]),
        )
    }

    pub fn is_error(&self) -> bool {
        matches!(self, ObservationEvent::EnvFeedback { result, .. } if result.get("error").is_some())
    }
}

/// Number of maximal runs of non-whitespace characters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub text: String,
    pub word_count: usize,
}

impl ReasoningTrace {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = word_count(&text);
        Self { text, word_count }
    }

    pub fn empty() -> Self {
        Self::new("")
    }

    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

impl Default for ReasoningTrace {
    fn default() -> Self {
        Self::empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    Speak {
        text: String,
    },
    InvokeTools {
        calls: Vec<ToolCall>,
    },
    /// Signals that the local tool set is insufficient. The candidate tools
    /// come from the proposer, never from the action.
    Retrieve,
}

impl AgentAction {
    pub fn speak(text: impl Into<String>) -> Self {
        AgentAction::Speak { text: text.into() }
    }

    pub fn invoke(calls: Vec<ToolCall>) -> Result<Self, ModelError> {
        let action = AgentAction::InvokeTools { calls };
        action.validate()?;
        Ok(action)
    }

    pub fn is_retrieve(&self) -> bool {
        matches!(self, AgentAction::Retrieve)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            AgentAction::InvokeTools { calls } if calls.is_empty() => {
                Err(ModelError::EmptyInvocation)
            }
            AgentAction::InvokeTools { calls } => calls.iter().try_for_each(ToolCall::validate),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Profile {
    #[serde(default)]
    static_attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub dynamic_hook: String,
}

impl Profile {
    pub fn new(static_attrs: BTreeMap<String, String>, dynamic_hook: impl Into<String>) -> Self {
        Self {
            static_attrs,
            dynamic_hook: dynamic_hook.into(),
        }
    }

    /// Static attributes are fixed at construction; there is no mutable accessor.
    pub fn static_attrs(&self) -> &BTreeMap<String, String> {
        &self.static_attrs
    }
}

/// Per-pass phase timestamps, in seconds on the orchestrator's clock.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassMarks {
    pub think_start: f64,
    pub think_finish: f64,
    pub act_start: f64,
    pub act_finish: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propose_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propose_finish: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnTiming {
    pub think_duration: f64,
    pub act_duration: f64,
    pub propose_duration: f64,
    pub waiting_overhead: f64,
    pub tokens_think: u64,
    pub tokens_answer: u64,
    /// Wall time of the whole decision on the orchestrator's clock.
    #[serde(default)]
    pub wall: f64,
    #[serde(default)]
    pub passes: Vec<PassMarks>,
}

impl TurnTiming {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            self.think_duration,
            self.act_duration,
            self.propose_duration,
            self.waiting_overhead,
            self.wall,
        ];
        if all.iter().any(|d| *d < 0.0 || d.is_nan()) {
            return Err(ModelError::NegativeDuration);
        }
        Ok(())
    }
}

/// One think → act → (update → think → act) cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub reasoning: ReasoningTrace,
    pub action: AgentAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup_reasoning: Option<ReasoningTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup_action: Option<AgentAction>,
    #[serde(default)]
    pub candidates_added: BTreeSet<ToolId>,
    pub timing: TurnTiming,
    #[serde(default)]
    pub tool_results: Vec<ObservationEvent>,
}

impl Decision {
    /// The action that was actually carried out: the follow-up after a
    /// retrieval, otherwise the first action.
    pub fn executed_action(&self) -> &AgentAction {
        self.followup_action.as_ref().unwrap_or(&self.action)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.action.validate()?;
        if let Some(f) = &self.followup_action {
            f.validate()?;
        }
        match (&self.action, &self.followup_action) {
            (AgentAction::Retrieve, None) => {
                return Err(ModelError::InvalidRecord(
                    "retrieve without follow-up action",
                ))
            }
            (a, Some(_)) if !a.is_retrieve() => {
                return Err(ModelError::InvalidRecord(
                    "follow-up action without retrieve",
                ))
            }
            _ => {}
        }
        if !self.action.is_retrieve() && !self.candidates_added.is_empty() {
            return Err(ModelError::InvalidRecord(
                "candidates added without retrieve",
            ));
        }
        if self
            .tool_results
            .iter()
            .any(|e| matches!(e, ObservationEvent::UserInput { .. }))
        {
            return Err(ModelError::InvalidRecord(
                "tool results must be env feedback",
            ));
        }
        self.timing.validate()
    }
}

/// Everything that happened in response to one set of observations.
///
/// The first decision is flattened into the record; `rounds` holds the
/// further decisions driven by tool feedback within the same turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub observations: Vec<ObservationEvent>,
    #[serde(flatten)]
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<Decision>,
}

impl TurnRecord {
    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        std::iter::once(&self.decision).chain(self.rounds.iter())
    }

    pub fn final_action(&self) -> &AgentAction {
        self.decisions()
            .last()
            .expect("at least one decision")
            .executed_action()
    }

    /// Text of the final spoken reply, if the turn ended with one.
    pub fn reply(&self) -> Option<&str> {
        match self.final_action() {
            AgentAction::Speak { text } => Some(text),
            _ => None,
        }
    }

    pub fn all_tool_results(&self) -> impl Iterator<Item = &ObservationEvent> {
        self.decisions().flat_map(|d| d.tool_results.iter())
    }

    pub fn all_candidates_added(&self) -> BTreeSet<ToolId> {
        self.decisions()
            .flat_map(|d| d.candidates_added.iter().copied())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.observations.is_empty() {
            return Err(ModelError::InvalidRecord("turn has no observations"));
        }
        self.decisions().try_for_each(Decision::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    #[serde(default)]
    pub history: Vec<TurnRecord>,
    #[serde(default)]
    pub local_tool_ids: BTreeSet<ToolId>,
    #[serde(default)]
    pub tool_generation: u64,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub short_term: VecDeque<ObservationEvent>,
    #[serde(default = "default_capacity")]
    pub short_term_capacity: usize,
    #[serde(default)]
    pub long_term: BTreeMap<String, String>,
}

fn default_capacity() -> usize {
    DEFAULT_SHORT_TERM_CAPACITY
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new(Profile::default())
    }
}

impl SessionState {
    pub fn new(profile: Profile) -> Self {
        Self {
            history: Vec::new(),
            local_tool_ids: BTreeSet::new(),
            tool_generation: 0,
            profile,
            short_term: VecDeque::new(),
            short_term_capacity: DEFAULT_SHORT_TERM_CAPACITY,
            long_term: BTreeMap::new(),
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.short_term_capacity = capacity;
        self.trim_short_term();
        self
    }

    pub fn with_local_tools(mut self, ids: impl IntoIterator<Item = ToolId>) -> Self {
        self.local_tool_ids.extend(ids);
        self
    }

    pub fn remember(&mut self, event: ObservationEvent) {
        self.short_term.push_back(event);
        self.trim_short_term();
    }

    fn trim_short_term(&mut self) {
        while self.short_term.len() > self.short_term_capacity {
            self.short_term.pop_front();
        }
    }

    /// Appends a validated record to the history and feeds its observations
    /// and tool results through the short-term buffer.
    pub fn append_turn(&mut self, record: TurnRecord) -> Result<(), ModelError> {
        record.validate()?;
        for event in record.observations.iter().chain(record.all_tool_results()) {
            self.short_term.push_back(event.clone());
        }
        self.trim_short_term();
        self.history.push(record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speak_record(text: &str) -> TurnRecord {
        TurnRecord {
            observations: vec![ObservationEvent::user(text)],
            decision: Decision {
                reasoning: ReasoningTrace::new("t"),
                action: AgentAction::speak("hello"),
                followup_reasoning: None,
                followup_action: None,
                candidates_added: BTreeSet::new(),
                timing: TurnTiming::default(),
                tool_results: vec![],
            },
            rounds: vec![],
        }
    }

    /// Character-scan reference for `word_count`.
    fn scan_words(s: &str) -> usize {
        let mut count = 0;
        let mut in_word = false;
        for c in s.chars() {
            if c.is_whitespace() {
                in_word = false;
            } else if !in_word {
                in_word = true;
                count += 1;
            }
        }
        count
    }

    #[test]
    fn word_count_basics() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("a  b\tc"), 3);
        assert_eq!(word_count("  \n "), 0);
        assert_eq!(ReasoningTrace::new("one two").word_count, 2);
    }

    proptest::proptest! {
        #[test]
        fn word_count_matches_scan(s in "[a-z \t\n\u{3000}\u{a0}]{0,60}") {
            proptest::prop_assert_eq!(word_count(&s), scan_words(&s));
        }
    }

    #[test]
    fn append_to_empty_session() {
        let mut s = SessionState::default();
        s.append_turn(speak_record("hi")).unwrap();
        assert_eq!(s.history.len(), 1);
        assert_eq!(s.short_term.len(), 1);
    }

    #[test]
    fn short_term_evicts_oldest() {
        let mut s = SessionState::default();
        for i in 0..32 {
            s.remember(ObservationEvent::user(format!("u{i}")));
        }
        s.append_turn(speak_record("new")).unwrap();
        assert_eq!(s.short_term.len(), 32);
        assert_eq!(s.short_term.front(), Some(&ObservationEvent::user("u1")));
        assert_eq!(s.short_term.back(), Some(&ObservationEvent::user("new")));
    }

    #[test]
    fn followup_presence_is_enumerated() {
        let actions = [
            AgentAction::speak("x"),
            AgentAction::invoke(vec![ToolCall::new("f")]).unwrap(),
            AgentAction::Retrieve,
        ];
        let followups = [
            None,
            Some(AgentAction::speak("y")),
            Some(AgentAction::invoke(vec![ToolCall::new("g")]).unwrap()),
        ];
        for a in &actions {
            for f in &followups {
                let mut rec = speak_record("q");
                rec.decision.action = a.clone();
                rec.decision.followup_action = f.clone();
                let expected_ok = a.is_retrieve() == f.is_some();
                let mut s = SessionState::default();
                let before = serde_json::to_string(&s.history).unwrap();
                let res = s.append_turn(rec);
                assert_eq!(res.is_ok(), expected_ok, "{a:?} / {f:?}");
                if !expected_ok {
                    assert_eq!(serde_json::to_string(&s.history).unwrap(), before);
                }
            }
        }
    }

    #[test]
    fn candidates_require_retrieve() {
        let mut rec = speak_record("q");
        rec.decision.candidates_added.insert(ToolId(1));
        assert!(rec.validate().is_err());
    }

    #[test]
    fn append_is_append_only() {
        let mut s = SessionState::default();
        s.append_turn(speak_record("a")).unwrap();
        let first = serde_json::to_string(&s.history[0]).unwrap();
        s.append_turn(speak_record("b")).unwrap();
        assert_eq!(serde_json::to_string(&s.history[0]).unwrap(), first);
    }

    #[test]
    fn empty_invocation_rejected() {
        assert_eq!(
            AgentAction::invoke(vec![]),
            Err(ModelError::EmptyInvocation)
        );
    }

    #[test]
    fn tool_spec_validation() {
        let dup = ToolSpec::new("f", "d")
            .param(ParamSpec::new("a", ParamKind::String))
            .param(ParamSpec::new("a", ParamKind::Number));
        assert!(matches!(
            dup.validate(),
            Err(ModelError::DuplicateParam { .. })
        ));
        let bad_enum = ToolSpec::new("f", "d")
            .param(ParamSpec::new("a", ParamKind::String).with_enum(["x", "x"]));
        assert!(matches!(
            bad_enum.validate(),
            Err(ModelError::InvalidEnum { .. })
        ));
        assert_eq!(
            ToolSpec::new(" ", "d").validate(),
            Err(ModelError::EmptyToolName)
        );
    }

    #[test]
    fn json_field_names() {
        let rec = speak_record("hi");
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        for key in [
            "observations",
            "reasoning",
            "action",
            "candidates_added",
            "timing",
            "tool_results",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["action"]["type"], "speak");
        assert_eq!(v["observations"][0]["type"], "user_input");
        let back: TurnRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn arg_value_json_shape() {
        let v = ArgValue::map([
            ("n", ArgValue::int(42)),
            ("x", ArgValue::float(42.0)),
            (
                "s",
                ArgValue::List(vec![ArgValue::text("a"), ArgValue::Boolean(true)]),
            ),
        ]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"n":42,"x":42.0,"s":["a",true]}"#);
        let back: ArgValue = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
