//! Reasoning-trace construction: reverse generation, score-gated retention
//! with bounded retries, refinement, compression, tool-necessity filtering
//! and ratio-based dataset composition.

mod manifest;
mod strategy;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use manifest::{
    compose_manifest, default_tool_categories, reference_corpus, DatasetManifest, ManifestEntry,
    MixRatio, SampleMeta, DEFAULT_TOOL_CATEGORIES, REFERENCE_COMPOSITION,
};
pub use strategy::{
    think_line, FnStrategy, GenerationRequest, LlmStrategy, NecessityScorer, PriorAttempt,
    ScriptedStrategy, StrategyCall, TemplateStub, TraceCompressor, TraceGenerator, TraceRefiner,
    TraceScorer,
};

use crate::model::ReasoningTrace;

/// Compressor invocations before giving up.
pub const MAX_COMPRESSION_TRIES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("generator output is not a single-line {{\"think\": ...}} object: {0}")]
    GeneratorFormatError(String),
    #[error("refiner output rejected: {0}")]
    RefinerFormatError(String),
    #[error("scorer output rejected: {0}")]
    ScorerFormatError(String),
    #[error("value {0} is out of range")]
    OutOfRange(String),
    #[error("no compression within {limit} words after {tries} tries")]
    CompressionBudgetExceeded { limit: usize, tries: usize },
    #[error("needed {needed_hours:.2} h of general data, only {available_hours:.2} h available")]
    InsufficientData {
        needed_hours: f64,
        available_hours: f64,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("strategy failed: {0}")]
    Strategy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Minimum retained score (inclusive).
    pub tau: f64,
    pub max_attempts: u32,
    /// Word budget for compression; no compression when absent.
    pub think_max_words: Option<usize>,
    pub necessity_min: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 7.0,
            max_attempts: 3,
            think_max_words: None,
            necessity_min: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if !(0.0..=10.0).contains(&self.tau) {
            return Err(DatagenError::InvalidConfig(format!(
                "tau {} outside 0..=10",
                self.tau
            )));
        }
        if self.max_attempts == 0 {
            return Err(DatagenError::InvalidConfig(
                "max_attempts must be at least 1".into(),
            ));
        }
        if self.necessity_min > 4 {
            return Err(DatagenError::InvalidConfig(
                "necessity_min must be 0..=4".into(),
            ));
        }
        if self.think_max_words == Some(0) {
            return Err(DatagenError::InvalidConfig(
                "think_max_words must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotCandidate {
    pub query: String,
    pub answer: String,
    pub trace: ReasoningTrace,
    pub score: Option<f64>,
    pub attempt: u32,
}

/// Rubric parts; they must add up to the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub correctness: f64,
    pub relevance: f64,
    pub clarity: f64,
    pub completeness: f64,
    pub brevity: f64,
}

impl ScoreBreakdown {
    pub fn total(&self) -> f64 {
        self.correctness + self.relevance + self.clarity + self.completeness + self.brevity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    pub breakdown: Option<ScoreBreakdown>,
}

/// Parses a `{"think": "..."}` line: one line, one key, a string value.
pub fn parse_think_line(raw: &str) -> Result<String, String> {
    let line = raw
        .strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(raw);
    if line.contains(['\n', '\r']) {
        return Err("output spans several lines".into());
    }
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let Value::Object(map) = value else {
        return Err("not a JSON object".into());
    };
    if map.len() != 1 {
        return Err(format!("expected exactly one key, found {}", map.len()));
    }
    match map.get("think") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err("`think` is not a string".into()),
        None => Err("missing `think`".into()),
    }
}

fn number_field(
    map: &serde_json::Map<String, Value>,
    key: &str,
) -> Result<Option<f64>, DatagenError> {
    match map.get(key) {
        None => Ok(None),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(other) => Err(DatagenError::ScorerFormatError(format!(
            "`{key}` is not a number: {other}"
        ))),
    }
}

/// Reads either `{"score": x, ...}` or the rubric form with five parts and
/// `total_score`.
pub fn parse_score(raw: &str) -> Result<ScoreReport, DatagenError> {
    let value: Value = serde_json::from_str(raw.trim())
        .map_err(|e| DatagenError::ScorerFormatError(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(DatagenError::ScorerFormatError("not a JSON object".into()));
    };
    let parts = [
        "correctness",
        "relevance",
        "clarity",
        "completeness",
        "brevity",
    ];
    let maxima = [4.0, 2.0, 2.0, 1.0, 1.0];
    let mut values = [0.0; 5];
    let mut present = 0;
    for (i, p) in parts.iter().enumerate() {
        if let Some(v) = number_field(&map, p)? {
            if !(0.0..=maxima[i]).contains(&v) {
                return Err(DatagenError::OutOfRange(format!("{p}={v}")));
            }
            values[i] = v;
            present += 1;
        }
    }
    let breakdown = match present {
        0 => None,
        5 => Some(ScoreBreakdown {
            correctness: values[0],
            relevance: values[1],
            clarity: values[2],
            completeness: values[3],
            brevity: values[4],
        }),
        _ => {
            return Err(DatagenError::ScorerFormatError(
                "incomplete rubric breakdown".into(),
            ))
        }
    };
    let score = match (
        number_field(&map, "score")?,
        number_field(&map, "total_score")?,
    ) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => match &breakdown {
            Some(b) => b.total(),
            None => return Err(DatagenError::ScorerFormatError("no score field".into())),
        },
    };
    if !(0.0..=10.0).contains(&score) {
        return Err(DatagenError::OutOfRange(format!("score={score}")));
    }
    if let Some(b) = &breakdown {
        if (b.total() - score).abs() > 1e-9 {
            return Err(DatagenError::ScorerFormatError(format!(
                "rubric parts add to {} but total is {score}",
                b.total()
            )));
        }
    }
    Ok(ScoreReport { score, breakdown })
}

/// Reads `{"tool_necessity": X}` with integer X in 0..=4.
pub fn parse_necessity(raw: &str) -> Result<u8, DatagenError> {
    let bad = |m: String| DatagenError::ScorerFormatError(m);
    let value: Value = serde_json::from_str(raw.trim()).map_err(|e| bad(e.to_string()))?;
    let x = value
        .get("tool_necessity")
        .ok_or_else(|| bad("missing `tool_necessity`".into()))?;
    let n = x
        .as_i64()
        .or_else(|| {
            x.as_f64()
                .filter(|f| f.fract() == 0.0 && f.abs() < 1e15)
                .map(|f| f as i64)
        })
        .ok_or_else(|| bad(format!("`tool_necessity` is not an integer: {x}")))?;
    u8::try_from(n)
        .ok()
        .filter(|n| *n <= 4)
        .ok_or_else(|| DatagenError::OutOfRange(format!("tool_necessity={n}")))
}

pub async fn generate_trace(
    query: &str,
    answer: &str,
    generator: &dyn TraceGenerator,
    prior: Option<&PriorAttempt>,
) -> Result<ReasoningTrace, DatagenError> {
    generate_raw(query, answer, 1, prior, generator)
        .await
        .and_then(|(raw, _)| {
            parse_think_line(&raw)
                .map(ReasoningTrace::new)
                .map_err(DatagenError::GeneratorFormatError)
        })
}

async fn generate_raw(
    query: &str,
    answer: &str,
    attempt: u32,
    prior: Option<&PriorAttempt>,
    generator: &dyn TraceGenerator,
) -> Result<(String, ()), DatagenError> {
    if query.trim().is_empty() || answer.trim().is_empty() {
        return Err(DatagenError::InvalidInput(
            "query and answer must be non-empty".into(),
        ));
    }
    let request = GenerationRequest {
        query,
        answer,
        attempt,
        prior,
    };
    Ok((generator.generate(&request).await?, ()))
}

pub async fn score_trace(
    query: &str,
    answer: &str,
    trace: &ReasoningTrace,
    scorer: &dyn TraceScorer,
) -> Result<ScoreReport, DatagenError> {
    parse_score(&scorer.score(query, answer, trace).await?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub raw: String,
    /// Why the output was unusable, when it was.
    pub format_error: Option<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FilterOutcome {
    Retained {
        candidate: CotCandidate,
        history: Vec<AttemptRecord>,
    },
    Discarded {
        attempts: u32,
        history: Vec<AttemptRecord>,
    },
}

impl FilterOutcome {
    pub fn history(&self) -> &[AttemptRecord] {
        match self {
            FilterOutcome::Retained { history, .. } | FilterOutcome::Discarded { history, .. } => {
                history
            }
        }
    }
}

/// Generates and scores up to `max_attempts` traces, keeping the first whose
/// score reaches `tau`. An unparseable generation uses up an attempt.
pub async fn filter_loop(
    query: &str,
    answer: &str,
    generator: &dyn TraceGenerator,
    scorer: &dyn TraceScorer,
    config: &PipelineConfig,
) -> Result<FilterOutcome, DatagenError> {
    config.validate()?;
    let mut history: Vec<AttemptRecord> = Vec::new();
    let mut prior: Option<PriorAttempt> = None;
    for attempt in 1..=config.max_attempts {
        let (raw, ()) = generate_raw(query, answer, attempt, prior.as_ref(), generator).await?;
        let (trace, score, format_error) = match parse_think_line(&raw) {
            Err(e) => (None, None, Some(e)),
            Ok(text) => {
                let trace = ReasoningTrace::new(text);
                let report = score_trace(query, answer, &trace, scorer).await?;
                if report.score >= config.tau {
                    history.push(AttemptRecord {
                        attempt,
                        raw,
                        format_error: None,
                        score: Some(report.score),
                    });
                    return Ok(FilterOutcome::Retained {
                        candidate: CotCandidate {
                            query: query.to_string(),
                            answer: answer.to_string(),
                            trace,
                            score: Some(report.score),
                            attempt,
                        },
                        history,
                    });
                }
                (Some(trace.text), Some(report.score), None)
            }
        };
        prior = Some(PriorAttempt {
            raw: raw.clone(),
            trace,
            score,
        });
        history.push(AttemptRecord {
            attempt,
            raw,
            format_error,
            score,
        });
    }
    Ok(FilterOutcome::Discarded {
        attempts: config.max_attempts,
        history,
    })
}

pub async fn refine_trace(
    trace: &ReasoningTrace,
    refiner: &dyn TraceRefiner,
) -> Result<ReasoningTrace, DatagenError> {
    if trace.is_empty() {
        return Err(DatagenError::InvalidInput(
            "cannot refine an empty trace".into(),
        ));
    }
    let raw = refiner.refine(trace).await?;
    let text = parse_think_line(&raw).map_err(DatagenError::RefinerFormatError)?;
    if text.trim().is_empty() {
        return Err(DatagenError::RefinerFormatError("empty refinement".into()));
    }
    Ok(ReasoningTrace::new(text))
}

/// Returns the trace unchanged when it already fits; otherwise asks the
/// compressor up to three times for a version within `word_limit` words.
pub async fn compress_trace(
    trace: &ReasoningTrace,
    word_limit: usize,
    answer: Option<&str>,
    compressor: &dyn TraceCompressor,
) -> Result<ReasoningTrace, DatagenError> {
    if word_limit == 0 {
        return Err(DatagenError::InvalidInput(
            "word_limit must be at least 1".into(),
        ));
    }
    if trace.word_count <= word_limit {
        return Ok(trace.clone());
    }
    for _ in 0..MAX_COMPRESSION_TRIES {
        let raw = compressor.compress(trace, answer, word_limit).await?;
        if let Ok(text) = parse_think_line(&raw) {
            let candidate = ReasoningTrace::new(text);
            if !candidate.is_empty() && candidate.word_count <= word_limit {
                return Ok(candidate);
            }
        }
    }
    Err(DatagenError::CompressionBudgetExceeded {
        limit: word_limit,
        tries: MAX_COMPRESSION_TRIES,
    })
}

pub async fn tool_necessity(query: &str, scorer: &dyn NecessityScorer) -> Result<u8, DatagenError> {
    if query.trim().is_empty() {
        return Err(DatagenError::InvalidInput("query must be non-empty".into()));
    }
    parse_necessity(&scorer.assess(query).await?)
}

/// Input corpus line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub query: String,
    pub answer: String,
    pub category: String,
    #[serde(default)]
    pub duration_seconds: f64,
}

/// Output line for a retained item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedRecord {
    pub id: String,
    pub think: String,
    pub score: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ItemOutcome {
    Retained(RetainedRecord),
    Discarded { id: String, attempts: u32 },
    NotToolNecessary { id: String, necessity: u8 },
}

impl ItemOutcome {
    pub fn id(&self) -> &str {
        match self {
            ItemOutcome::Retained(r) => &r.id,
            ItemOutcome::Discarded { id, .. } | ItemOutcome::NotToolNecessary { id, .. } => id,
        }
    }
}

/// The strategies a pipeline run uses; the optional stages are skipped when absent.
pub struct Strategies<'a> {
    pub generator: &'a dyn TraceGenerator,
    pub scorer: &'a dyn TraceScorer,
    pub refiner: Option<&'a dyn TraceRefiner>,
    pub compressor: Option<&'a dyn TraceCompressor>,
    pub necessity: Option<&'a dyn NecessityScorer>,
}

pub async fn process_item(
    record: &CorpusRecord,
    strategies: &Strategies<'_>,
    config: &PipelineConfig,
) -> Result<ItemOutcome, DatagenError> {
    if let Some(scorer) = strategies.necessity {
        let necessity = tool_necessity(&record.query, scorer).await?;
        if necessity < config.necessity_min {
            return Ok(ItemOutcome::NotToolNecessary {
                id: record.id.clone(),
                necessity,
            });
        }
    }
    let outcome = filter_loop(
        &record.query,
        &record.answer,
        strategies.generator,
        strategies.scorer,
        config,
    )
    .await?;
    let FilterOutcome::Retained { candidate, .. } = outcome else {
        return Ok(ItemOutcome::Discarded {
            id: record.id.clone(),
            attempts: config.max_attempts,
        });
    };
    let mut trace = candidate.trace;
    if let Some(refiner) = strategies.refiner {
        trace = refine_trace(&trace, refiner).await?;
    }
    if let (Some(compressor), Some(limit)) = (strategies.compressor, config.think_max_words) {
        trace = compress_trace(&trace, limit, Some(&record.answer), compressor).await?;
    }
    Ok(ItemOutcome::Retained(RetainedRecord {
        id: record.id.clone(),
        think: trace.text,
        score: candidate.score.expect("retained candidates are scored"),
        attempts: candidate.attempt,
    }))
}

/// Processes items concurrently and returns outcomes sorted by id.
pub async fn run_pipeline(
    records: &[CorpusRecord],
    strategies: &Strategies<'_>,
    config: &PipelineConfig,
    concurrency: usize,
) -> Result<Vec<ItemOutcome>, DatagenError> {
    config.validate()?;
    let mut outcomes: Vec<ItemOutcome> =
        stream::iter(records.iter().map(|r| process_item(r, strategies, config)))
            .buffered(concurrency.max(1))
            .try_collect()
            .await?;
    outcomes.sort_by(|a, b| a.id().cmp(b.id()));
    Ok(outcomes)
}
