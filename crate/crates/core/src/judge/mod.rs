//! Deterministic tool-call judge and corpus metrics.
//!
//! Both texts are reduced to extracted calls. Tool selection compares the
//! multiset of call names; parameter filling then looks for a pairing of
//! same-named calls under which every pair has the same parameter names and
//! equivalent values. Values are equivalent when their text matches after
//! quote stripping, or when both read as the same exact decimal.

mod decimal;
mod extract;

use std::collections::{BTreeMap, HashMap};

use async_trait::async_trait;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decimal::Decimal;
pub use extract::{
    extract_tool_calls, normalize_param_name, strip_think, ExtractedCall, ExtractedParam,
    ParsedValue,
};

use crate::codec::parse_assistant_output;

/// Largest group of same-named calls paired by exhaustive search.
pub const BIJECTION_SEARCH_CAP: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JudgeError {
    #[error("parameter filling requires a correct tool selection")]
    PreconditionViolated,
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("feedback completeness score {0} outside 0..=5")]
    ScoreOutOfRange(String),
    #[error("feedback judge failed: {0}")]
    Hook(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub func_select_correct: bool,
    pub param_fill_correct: bool,
}

impl JudgeVerdict {
    /// `{"func_select_correct": true, "param_fill_correct": false}`
    pub fn to_line(&self) -> String {
        format!(
            "{{\"func_select_correct\": {}, \"param_fill_correct\": {}}}",
            self.func_select_correct, self.param_fill_correct
        )
    }
}

/// Canonical comparison key of a value: equal keys ⇔ equivalent values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueKey {
    Null,
    Bool(bool),
    Num(Decimal),
    Text(String),
    List(Vec<ValueKey>),
    Map(BTreeMap<String, ValueKey>),
}

fn strip_quotes(mut s: &str) -> &str {
    loop {
        s = s.trim();
        let b = s.as_bytes();
        if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
            s = &s[1..s.len() - 1];
        } else {
            return s;
        }
    }
}

fn text_key(text: &str) -> ValueKey {
    let t = strip_quotes(text);
    if let Some(d) = Decimal::parse(t) {
        return ValueKey::Num(d);
    }
    match t {
        "true" | "True" => ValueKey::Bool(true),
        "false" | "False" => ValueKey::Bool(false),
        "null" | "None" => ValueKey::Null,
        _ => ValueKey::Text(t.to_string()),
    }
}

pub fn value_key(value: &ParsedValue) -> ValueKey {
    match value {
        ParsedValue::Null => ValueKey::Null,
        ParsedValue::Bool(b) => ValueKey::Bool(*b),
        ParsedValue::Number(n) | ParsedValue::Str(n) | ParsedValue::Bare(n) => text_key(n),
        ParsedValue::List(items) => ValueKey::List(items.iter().map(value_key).collect()),
        ParsedValue::Map(entries) => ValueKey::Map(
            entries
                .iter()
                .map(|(k, v)| (k.clone(), value_key(v)))
                .collect(),
        ),
    }
}

pub fn value_match(a: &ParsedValue, b: &ParsedValue) -> bool {
    value_key(a) == value_key(b)
}

/// Parameter names and value keys of a call; two calls fill parameters
/// equivalently iff their signatures are equal.
pub type CallSignature = BTreeMap<String, ValueKey>;

pub fn call_signature(call: &ExtractedCall) -> CallSignature {
    call.params
        .iter()
        .map(|(k, p)| (k.clone(), value_key(&p.value)))
        .collect()
}

pub fn calls_match(a: &ExtractedCall, b: &ExtractedCall) -> bool {
    call_signature(a) == call_signature(b)
}

fn sorted_names(calls: &[ExtractedCall]) -> Vec<&str> {
    let mut names: Vec<&str> = calls.iter().map(|c| c.name.trim()).collect();
    names.sort_unstable();
    names
}

pub fn compare_tool_selection(target: &[ExtractedCall], output: &[ExtractedCall]) -> bool {
    sorted_names(target) == sorted_names(output)
}

fn find_bijection(
    target: &[CallSignature],
    output: &[CallSignature],
    used: &mut [bool],
    i: usize,
) -> bool {
    if i == target.len() {
        return true;
    }
    for j in 0..output.len() {
        if !used[j] && target[i] == output[j] {
            used[j] = true;
            if find_bijection(target, output, used, i + 1) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

fn group(calls: &[ExtractedCall]) -> HashMap<&str, Vec<CallSignature>> {
    let mut groups: HashMap<&str, Vec<CallSignature>> = HashMap::new();
    for c in calls {
        groups
            .entry(c.name.trim())
            .or_default()
            .push(call_signature(c));
    }
    groups
}

pub fn compare_param_fill(
    target: &[ExtractedCall],
    output: &[ExtractedCall],
) -> Result<bool, JudgeError> {
    if !compare_tool_selection(target, output) {
        return Err(JudgeError::PreconditionViolated);
    }
    let out_groups = group(output);
    for (name, t) in group(target) {
        let o = &out_groups[name];
        let matched = if t.len() <= BIJECTION_SEARCH_CAP {
            find_bijection(&t, o, &mut vec![false; o.len()], 0)
        } else {
            let (mut ts, mut os) = (t.clone(), o.clone());
            ts.sort();
            os.sort();
            ts == os
        };
        if !matched {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn judge_calls(target: &[ExtractedCall], output: &[ExtractedCall]) -> JudgeVerdict {
    if !compare_tool_selection(target, output) {
        return JudgeVerdict {
            func_select_correct: false,
            param_fill_correct: false,
        };
    }
    JudgeVerdict {
        func_select_correct: true,
        param_fill_correct: compare_param_fill(target, output).expect("selection checked"),
    }
}

pub fn judge_pair(target_text: &str, output_text: &str) -> JudgeVerdict {
    judge_calls(
        &extract_tool_calls(target_text),
        &extract_tool_calls(output_text),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    SingleTask,
    TaskDecomposition,
    ParallelProcessing,
    ContextualPlanning,
    ProactiveSeeking,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::SingleTask,
        Capability::TaskDecomposition,
        Capability::ParallelProcessing,
        Capability::ContextualPlanning,
        Capability::ProactiveSeeking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::SingleTask => "single_task",
            Capability::TaskDecomposition => "task_decomposition",
            Capability::ParallelProcessing => "parallel_processing",
            Capability::ContextualPlanning => "contextual_planning",
            Capability::ProactiveSeeking => "proactive_seeking",
        }
    }
}

impl std::str::FromStr for Capability {
    type Err = JudgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| JudgeError::UnknownCapability(s.to_string()))
    }
}

/// One line of a judge corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    #[serde(default)]
    pub id: Option<String>,
    pub capability: String,
    pub target: String,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapabilityMetrics {
    pub ts: f64,
    pub pf: f64,
    /// Only defined for proactive-seeking items with a retrieval target.
    pub tu: Option<f64>,
    pub n_items: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub ts: f64,
    pub pf: f64,
    pub tu: Option<f64>,
    pub n_items: usize,
    pub per_capability: BTreeMap<String, CapabilityMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: Option<String>,
    pub capability: Capability,
    pub verdict: JudgeVerdict,
    /// Present for proactive-seeking items whose target is a retrieval.
    pub retrieval_hit: Option<bool>,
}

pub fn is_retrieval(text: &str) -> bool {
    parse_assistant_output(text).is_ok_and(|p| p.action.is_retrieve())
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

#[derive(Default)]
struct Tally {
    n: usize,
    ts: usize,
    pf: usize,
    tu_n: usize,
    tu_hits: usize,
}

impl Tally {
    fn add(&mut self, item: &ScoredItem) {
        self.n += 1;
        self.ts += usize::from(item.verdict.func_select_correct);
        self.pf += usize::from(item.verdict.param_fill_correct);
        if let Some(hit) = item.retrieval_hit {
            self.tu_n += 1;
            self.tu_hits += usize::from(hit);
        }
    }

    fn metrics(&self) -> CapabilityMetrics {
        CapabilityMetrics {
            ts: percent(self.ts, self.n),
            pf: percent(self.pf, self.n),
            tu: (self.tu_n > 0).then(|| percent(self.tu_hits, self.tu_n)),
            n_items: self.n,
        }
    }
}

/// Judges every item (in parallel, results kept in input order).
pub fn score_items(items: &[CorpusItem]) -> Result<Vec<ScoredItem>, JudgeError> {
    let caps = items
        .iter()
        .map(|i| i.capability.parse())
        .collect::<Result<Vec<Capability>, _>>()?;
    Ok(items
        .par_iter()
        .zip(caps.par_iter())
        .map(|(item, &capability)| ScoredItem {
            id: item.id.clone(),
            capability,
            verdict: judge_pair(&item.target, &item.output),
            retrieval_hit: (capability == Capability::ProactiveSeeking
                && is_retrieval(&item.target))
            .then(|| is_retrieval(&item.output)),
        })
        .collect())
}

pub fn aggregate(scored: &[ScoredItem]) -> CorpusMetrics {
    let mut total = Tally::default();
    let mut per: BTreeMap<Capability, Tally> = BTreeMap::new();
    for item in scored {
        total.add(item);
        per.entry(item.capability).or_default().add(item);
    }
    let overall = total.metrics();
    CorpusMetrics {
        ts: overall.ts,
        pf: overall.pf,
        tu: overall.tu,
        n_items: overall.n_items,
        per_capability: per
            .into_iter()
            .map(|(c, t)| (c.as_str().to_string(), t.metrics()))
            .collect(),
    }
}

pub fn score_corpus(items: &[CorpusItem]) -> Result<CorpusMetrics, JudgeError> {
    Ok(aggregate(&score_items(items)?))
}

/// External scorer for feedback completeness, returning a 0–5 score for a
/// response given the tool feedback it should report.
#[async_trait]
pub trait FeedbackCompletenessJudge: Send + Sync {
    async fn score(&self, feedback: &str, response: &str) -> Result<f64, JudgeError>;
}

/// Mean feedback-completeness score over `(feedback, response)` pairs.
pub async fn score_feedback_completeness(
    judge: &dyn FeedbackCompletenessJudge,
    pairs: &[(String, String)],
) -> Result<Option<f64>, JudgeError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (feedback, response) in pairs {
        let s = judge.score(feedback, response).await?;
        if !(0.0..=5.0).contains(&s) {
            return Err(JudgeError::ScoreOutOfRange(s.to_string()));
        }
        sum += s;
    }
    Ok(Some(sum / pairs.len() as f64))
}
