//! Python bindings. Structured values cross the boundary as JSON strings.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use voxkit_core::bench::{self, DelayModel, TokenReport};
use voxkit_core::clock::VirtualClock;
use voxkit_core::codec;
use voxkit_core::datagen::{self, MixRatio, SampleMeta};
use voxkit_core::io::from_jsonl;
use voxkit_core::judge::{self, CorpusItem};
use voxkit_core::model::{AgentAction, ObservationEvent, SessionState};
use voxkit_core::orchestrator::{
    Orchestrator, PolicyBackendSet, ScriptedExecutor, ToolExecutorRegistry, TurnConfig,
};
use voxkit_core::policy::{PolicyBackend, ScriptedBackend};
use voxkit_core::tool_space::{CandidateProposer, FixedProposer, GlobalToolPool};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(runtime_err)
}

#[pyclass(frozen, get_all, eq, skip_from_py_object, module = "voxkit")]
#[derive(Clone, Copy, PartialEq)]
pub struct JudgeVerdict {
    pub func_select_correct: bool,
    pub param_fill_correct: bool,
}

#[pymethods]
impl JudgeVerdict {
    #[allow(clippy::wrong_self_convention)]
    fn to_line(&self) -> String {
        judge::JudgeVerdict::from(*self).to_line()
    }

    fn __repr__(&self) -> String {
        format!(
            "JudgeVerdict(func_select_correct={}, param_fill_correct={})",
            py_bool(self.func_select_correct),
            py_bool(self.param_fill_correct)
        )
    }
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

impl From<judge::JudgeVerdict> for JudgeVerdict {
    fn from(v: judge::JudgeVerdict) -> Self {
        Self {
            func_select_correct: v.func_select_correct,
            param_fill_correct: v.param_fill_correct,
        }
    }
}

impl From<JudgeVerdict> for judge::JudgeVerdict {
    fn from(v: JudgeVerdict) -> Self {
        Self {
            func_select_correct: v.func_select_correct,
            param_fill_correct: v.param_fill_correct,
        }
    }
}

/// Judges a model output against a ground-truth answer.
#[pyfunction]
fn judge_pair(target: &str, output: &str) -> JudgeVerdict {
    judge::judge_pair(target, output).into()
}

/// Tool calls found in free text, as a JSON array.
#[pyfunction]
fn extract_tool_calls(text: &str) -> PyResult<String> {
    to_json(&judge::extract_tool_calls(text))
}

/// Scores a JSON-lines corpus and returns the metrics as JSON.
#[pyfunction]
fn score_corpus(corpus_jsonl: &str) -> PyResult<String> {
    let items: Vec<CorpusItem> = from_jsonl(corpus_jsonl).map_err(value_err)?;
    to_json(&judge::score_corpus(&items).map_err(value_err)?)
}

/// Splits assistant text into `{"think": ..., "action": ...}`.
#[pyfunction]
fn parse_assistant_output(text: &str) -> PyResult<String> {
    let parsed = codec::parse_assistant_output(text).map_err(value_err)?;
    to_json(&serde_json::json!({"think": parsed.trace.text, "action": parsed.action}))
}

/// Renders an action given as JSON in assistant wire format.
#[pyfunction]
fn serialize_action(action_json: &str) -> PyResult<String> {
    let action: AgentAction = serde_json::from_str(action_json).map_err(value_err)?;
    action.validate().map_err(value_err)?;
    Ok(codec::serialize_action(&action))
}

fn delay_model(model_json: Option<&str>, point_fit: bool) -> PyResult<DelayModel> {
    let model = match (model_json, point_fit) {
        (Some(_), true) => return Err(value_err("pass either model_json or point_fit")),
        (Some(j), false) => serde_json::from_str(j).map_err(value_err)?,
        (None, true) => DelayModel::point_fit(),
        (None, false) => DelayModel::default(),
    };
    model.validate().map_err(value_err)?;
    Ok(model)
}

/// Latency sweep under a virtual clock; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (sizes=None, trials=1, model_json=None, point_fit=false))]
fn latency_sweep(
    py: Python<'_>,
    sizes: Option<Vec<usize>>,
    trials: usize,
    model_json: Option<&str>,
    point_fit: bool,
) -> PyResult<String> {
    let model = delay_model(model_json, point_fit)?;
    let sizes = sizes.unwrap_or_else(|| bench::DEFAULT_SWEEP_SIZES.to_vec());
    let report = py
        .detach(|| bench::simulate_latency_sweep(&sizes, &model, trials))
        .map_err(value_err)?;
    to_json(&report)
}

/// Single-agent versus dynamic tool space turn times; returns JSON.
#[pyfunction]
#[pyo3(signature = (sizes=None, trials=1, model_json=None))]
fn scaling_compare(
    py: Python<'_>,
    sizes: Option<Vec<usize>>,
    trials: usize,
    model_json: Option<&str>,
) -> PyResult<String> {
    let model = delay_model(model_json, false)?;
    let sizes = sizes.unwrap_or_else(|| bench::DEFAULT_SCALING_SIZES.to_vec());
    let report = py
        .detach(|| bench::simulate_scaling_compare(&sizes, &model, trials))
        .map_err(value_err)?;
    to_json(&report)
}

/// Think-to-answer token ratio in percent; None when there are no answer tokens.
#[pyfunction]
fn token_ratio(think_avg: f64, answer_avg: f64) -> Option<f64> {
    TokenReport::from_averages(1, think_avg, answer_avg).ratio_percent()
}

/// Composes a dataset manifest from JSON-lines sample metadata.
#[pyfunction]
#[pyo3(signature = (samples_jsonl, ratio, tool_categories=None))]
fn compose_manifest(
    samples_jsonl: &str,
    ratio: &str,
    tool_categories: Option<Vec<String>>,
) -> PyResult<String> {
    let samples: Vec<SampleMeta> = from_jsonl(samples_jsonl).map_err(value_err)?;
    let ratio: MixRatio = ratio.parse().map_err(value_err)?;
    let tools = match tool_categories {
        Some(t) => t.into_iter().collect(),
        None => datagen::default_tool_categories(),
    };
    to_json(&datagen::compose_manifest(&samples, ratio, &tools).map_err(value_err)?)
}

/// Built-in reference sample metadata as JSON lines.
#[pyfunction]
fn reference_corpus() -> PyResult<String> {
    voxkit_core::io::to_jsonl(&datagen::reference_corpus()).map_err(runtime_err)
}

/// Runs one turn with scripted policy output and canned tool results.
/// Every pool tool starts in the local set. Returns the TurnRecord as JSON.
#[pyfunction]
fn run_scripted_turn(
    py: Python<'_>,
    pool_json: &str,
    script_jsonl: &str,
    tool_results_json: &str,
    user_text: &str,
) -> PyResult<String> {
    let pool = GlobalToolPool::from_json(pool_json).map_err(value_err)?;
    let executor = ScriptedExecutor::from_json(tool_results_json).map_err(value_err)?;
    let record = py.detach(|| {
        let rt = VirtualClock::runtime().map_err(runtime_err)?;
        rt.block_on(async {
            let clock = VirtualClock::shared();
            let backend: Arc<dyn PolicyBackend> = Arc::new(
                ScriptedBackend::from_jsonl(script_jsonl, clock.clone()).map_err(value_err)?,
            );
            let proposer: Arc<dyn CandidateProposer> = Arc::new(FixedProposer::default());
            let mut registry = ToolExecutorRegistry::new();
            executor.register_all(&mut registry);
            let session = SessionState::default().with_local_tools(pool.ids().collect::<Vec<_>>());
            let mut orch = Orchestrator::new(
                session,
                Arc::new(pool),
                PolicyBackendSet::single(backend, proposer),
                registry,
                TurnConfig::default(),
                clock,
            )
            .map_err(value_err)?;
            orch.run_turn(vec![ObservationEvent::user(user_text)])
                .await
                .map_err(runtime_err)
        })
    })?;
    to_json(&record)
}

#[pymodule]
fn voxkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<JudgeVerdict>()?;
    m.add_function(wrap_pyfunction!(judge_pair, m)?)?;
    m.add_function(wrap_pyfunction!(extract_tool_calls, m)?)?;
    m.add_function(wrap_pyfunction!(score_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(parse_assistant_output, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_action, m)?)?;
    m.add_function(wrap_pyfunction!(latency_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_compare, m)?)?;
    m.add_function(wrap_pyfunction!(token_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(compose_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(reference_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted_turn, m)?)?;
    Ok(())
}
