//! Simulated latency benchmarks over scripted backends.
//!
//! Every delay comes from a [`DelayModel`]; nothing here measures a real
//! model. Under a paused [`VirtualClock`] the reported durations equal the
//! configured delays exactly.

use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SharedClock, VirtualClock};
use crate::io::{atomic_write, IoError};
use crate::model::{
    ObservationEvent, ParamKind, ParamSpec, Profile, ReasoningTrace, SessionState, ToolId,
    ToolSpec, TurnRecord,
};
use crate::orchestrator::{
    run_turn, OrchestratorError, PolicyBackendSet, ToolExecutorRegistry, TurnConfig,
};
use crate::policy::{
    Phase, PolicyBackend, PolicyError, PolicyRequest, PolicyResponse, ScriptStep, ScriptedBackend,
};
use crate::tool_space::{
    CandidateProposal, CandidateProposer, FixedProposer, GlobalToolPool, ToolSpaceError,
};

pub const DEFAULT_SWEEP_SIZES: [usize; 5] = [10, 25, 50, 75, 100];
pub const DEFAULT_SCALING_SIZES: [usize; 6] = [1, 10, 25, 50, 75, 100];
pub const CSV_HEADER: &str = "pool_size,aux_duration_s,waiting_overhead_s,turn_wall_s";

/// Measured auxiliary durations per pool size, used by [`DelayModel::point_fit`].
pub const REFERENCE_AUX_DURATIONS: [(usize, f64); 5] = [
    (10, 1.3131),
    (25, 1.5731),
    (50, 1.8996),
    (75, 2.3782),
    (100, 2.6426),
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Synthetic delays, all in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayModel {
    pub act_base: f64,
    pub propose_base: f64,
    pub propose_per_tool: f64,
    /// Added to an act call per tool entry listed in its prompt.
    pub prompt_per_tool: f64,
    pub think_base: f64,
    /// When non-empty, proposer delay is interpolated between these
    /// `(pool_size, seconds)` points instead of using the linear terms.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub propose_points: Vec<(usize, f64)>,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            act_base: 3.0,
            propose_base: 1.25,
            propose_per_tool: 0.0135,
            prompt_per_tool: 0.02,
            think_base: 0.0,
            propose_points: Vec::new(),
        }
    }
}

impl DelayModel {
    /// Default model with proposer delays passing through the measured
    /// per-size durations.
    pub fn point_fit() -> Self {
        Self {
            propose_points: REFERENCE_AUX_DURATIONS.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let coefficients = [
            self.act_base,
            self.propose_base,
            self.propose_per_tool,
            self.prompt_per_tool,
            self.think_base,
        ];
        let points = self.propose_points.iter().map(|p| p.1);
        if coefficients
            .into_iter()
            .chain(points)
            .any(|c| !(c >= 0.0 && c.is_finite()))
        {
            return Err(BenchError::InvalidInput(
                "delay coefficients must be finite and ≥ 0".into(),
            ));
        }
        if self.propose_points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(BenchError::InvalidInput(
                "propose_points must have increasing sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn propose_delay(&self, pool_size: usize) -> f64 {
        let pts = &self.propose_points;
        let x = pool_size as f64;
        match pts.len() {
            0 => self.propose_base + self.propose_per_tool * x,
            1 => pts[0].1,
            n => {
                let i = pts.partition_point(|p| p.0 <= pool_size).clamp(1, n - 1);
                let ((x0, y0), (x1, y1)) = (pts[i - 1], pts[i]);
                let y = y0 + (y1 - y0) * (x - x0 as f64) / (x1 - x0) as f64;
                y.max(0.0)
            }
        }
    }

    /// Act delay for a prompt listing `prompt_tools` tool entries.
    pub fn act_delay(&self, prompt_tools: usize) -> f64 {
        self.act_base + self.prompt_per_tool * prompt_tools as f64
    }
}

/// Replays a script and sleeps according to a [`DelayModel`] before each
/// response.
pub struct ModeledBackend {
    script: ScriptedBackend,
    model: DelayModel,
    clock: SharedClock,
}

impl ModeledBackend {
    pub fn new(steps: Vec<ScriptStep>, model: DelayModel, clock: SharedClock) -> Self {
        Self {
            script: ScriptedBackend::new(steps, clock.clone()),
            model,
            clock,
        }
    }
}

#[async_trait]
impl PolicyBackend for ModeledBackend {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let delay = match request.phase {
            Phase::Act => {
                let entries = request.local_tools.len() + usize::from(request.retrieval_enabled);
                self.model.act_delay(entries)
            }
            Phase::Think => self.model.think_base,
            Phase::Auxiliary => 0.0,
        };
        self.clock.sleep_secs(delay).await;
        self.script.invoke(request).await
    }
}

/// Proposer whose latency depends on the pool size through a [`DelayModel`].
pub struct ModeledProposer<P> {
    pub inner: P,
    pub model: DelayModel,
    pub clock: SharedClock,
}

#[async_trait]
impl<P: CandidateProposer> CandidateProposer for ModeledProposer<P> {
    async fn propose(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError> {
        self.clock
            .sleep_secs(self.model.propose_delay(pool.len()))
            .await;
        self.inner.propose(reasoning, pool, k).await
    }
}

/// A pool of `size` distinct tools named `tool_000`, `tool_001`, ...
pub fn synthetic_pool(size: usize) -> GlobalToolPool {
    GlobalToolPool::from_specs((0..size).map(|i| {
        ToolSpec::new(
            format!("tool_{i:03}"),
            format!("Synthetic operation number {i}."),
        )
        .param(ParamSpec::new("query", ParamKind::String))
    }))
    .expect("synthetic names are unique")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pool_size: usize,
    pub aux_duration_s: f64,
    pub waiting_overhead_s: f64,
    pub turn_wall_s: f64,
}

impl SweepRow {
    /// `size, aux, overhead` with four decimals.
    pub fn table_line(&self) -> String {
        format!(
            "{}, {:.4}, {:.4}",
            self.pool_size, self.aux_duration_s, self.waiting_overhead_s
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub average_overhead_s: f64,
}

impl SweepReport {
    fn from_rows(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by_key(|r| r.pool_size);
        let average_overhead_s =
            rows.iter().map(|r| r.waiting_overhead_s).sum::<f64>() / rows.len().max(1) as f64;
        Self {
            rows,
            average_overhead_s,
        }
    }

    pub fn max_overhead_s(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.waiting_overhead_s)
            .fold(0.0, f64::max)
    }

    /// `(max − min) / min` of turn wall times.
    pub fn wall_variation(&self) -> f64 {
        let walls = self.rows.iter().map(|r| r.turn_wall_s);
        let max = walls.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = walls.fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            (max - min) / min
        } else {
            0.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.pool_size, r.aux_duration_s, r.waiting_overhead_s, r.turn_wall_s
            ));
        }
        out
    }

    pub fn plot_data(&self) -> PlotData {
        let x: Vec<f64> = self.rows.iter().map(|r| r.pool_size as f64).collect();
        PlotData {
            series: vec![
                PlotSeries::new(
                    "aux_duration_s",
                    &x,
                    self.rows.iter().map(|r| r.aux_duration_s),
                ),
                PlotSeries::new(
                    "waiting_overhead_s",
                    &x,
                    self.rows.iter().map(|r| r.waiting_overhead_s),
                ),
                PlotSeries::new("turn_wall_s", &x, self.rows.iter().map(|r| r.turn_wall_s)),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlotSeries {
    fn new(name: &str, x: &[f64], y: impl Iterator<Item = f64>) -> Self {
        Self {
            name: name.to_string(),
            x: x.to_vec(),
            y: y.collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub series: Vec<PlotSeries>,
}

fn check_inputs(sizes: &[usize], model: &DelayModel, trials: usize) -> Result<(), BenchError> {
    if sizes.is_empty() {
        return Err(BenchError::InvalidInput("sizes must be non-empty".into()));
    }
    if sizes.contains(&0) {
        return Err(BenchError::InvalidInput(
            "pool sizes must be at least 1".into(),
        ));
    }
    if trials == 0 {
        return Err(BenchError::InvalidInput("trials must be at least 1".into()));
    }
    model.validate()
}

const THINK_TEXT: &str = "the user wants an operation that is not in my current tools";

async fn sweep_trial(
    size: usize,
    model: &DelayModel,
    clock: &SharedClock,
) -> Result<TurnRecord, BenchError> {
    let pool = synthetic_pool(size);
    let steps = vec![
        ScriptStep::think(THINK_TEXT),
        ScriptStep::act("searchTools()"),
        ScriptStep::think("tool_000 covers the request"),
        ScriptStep::act("Done, the operation is available now."),
    ];
    let backend: Arc<dyn PolicyBackend> =
        Arc::new(ModeledBackend::new(steps, model.clone(), clock.clone()));
    let proposer: Arc<dyn CandidateProposer> = Arc::new(ModeledProposer {
        inner: FixedProposer::new(["tool_000"]),
        model: model.clone(),
        clock: clock.clone(),
    });
    let mut session = SessionState::new(Profile::default());
    let record = run_turn(
        &mut session,
        vec![ObservationEvent::user("please run the operation")],
        &pool,
        &PolicyBackendSet::single(backend, proposer),
        &ToolExecutorRegistry::new(),
        &TurnConfig::default(),
        clock,
    )
    .await?;
    Ok(record)
}

/// Runs a retrieval turn per pool size and trial, averaging the auxiliary
/// duration, waiting overhead and wall time of each size.
pub async fn run_latency_sweep(
    sizes: &[usize],
    model: &DelayModel,
    trials: usize,
    clock: &SharedClock,
) -> Result<SweepReport, BenchError> {
    check_inputs(sizes, model, trials)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let (mut aux, mut wait, mut wall) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let timing = sweep_trial(size, model, clock).await?.decision.timing;
            aux += timing.propose_duration;
            wait += timing.waiting_overhead;
            wall += timing.wall;
        }
        let n = trials as f64;
        rows.push(SweepRow {
            pool_size: size,
            aux_duration_s: aux / n,
            waiting_overhead_s: wait / n,
            turn_wall_s: wall / n,
        });
    }
    Ok(SweepReport::from_rows(rows))
}

/// [`run_latency_sweep`] on a fresh paused runtime.
pub fn simulate_latency_sweep(
    sizes: &[usize],
    model: &DelayModel,
    trials: usize,
) -> Result<SweepReport, BenchError> {
    let rt = VirtualClock::runtime().map_err(IoError::from)?;
    rt.block_on(async { run_latency_sweep(sizes, model, trials, &VirtualClock::shared()).await })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub pool_size: usize,
    pub single_agent_s: f64,
    pub voxkit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub k: usize,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pool_size,single_agent_s,voxkit_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                r.pool_size, r.single_agent_s, r.voxkit_s
            ));
        }
        out
    }

    pub fn plot_data(&self) -> PlotData {
        let x: Vec<f64> = self.rows.iter().map(|r| r.pool_size as f64).collect();
        PlotData {
            series: vec![
                PlotSeries::new(
                    "single_agent_s",
                    &x,
                    self.rows.iter().map(|r| r.single_agent_s),
                ),
                PlotSeries::new("voxkit_s", &x, self.rows.iter().map(|r| r.voxkit_s)),
            ],
        }
    }
}

async fn speak_turn(
    pool: &GlobalToolPool,
    local: impl IntoIterator<Item = ToolId>,
    retrieval_enabled: bool,
    proposer: Arc<dyn CandidateProposer>,
    model: &DelayModel,
    clock: &SharedClock,
) -> Result<f64, BenchError> {
    let steps = vec![
        ScriptStep::think("a direct answer is enough here"),
        ScriptStep::act("Here is the answer."),
    ];
    let backend: Arc<dyn PolicyBackend> =
        Arc::new(ModeledBackend::new(steps, model.clone(), clock.clone()));
    let mut session = SessionState::new(Profile::default()).with_local_tools(local);
    let config = TurnConfig {
        retrieval_enabled,
        ..TurnConfig::default()
    };
    let record = run_turn(
        &mut session,
        vec![ObservationEvent::user("what time is it")],
        pool,
        &PolicyBackendSet::single(backend, proposer),
        &ToolExecutorRegistry::new(),
        &config,
        clock,
    )
    .await?;
    Ok(record.decision.timing.wall)
}

/// Steady-state reply turn for each size: a single agent that lists every
/// pool tool in its prompt, against a local set of at most `k` tools plus the
/// retrieval entry with the proposer running alongside.
pub async fn run_scaling_compare(
    sizes: &[usize],
    model: &DelayModel,
    trials: usize,
    clock: &SharedClock,
) -> Result<ScalingReport, BenchError> {
    check_inputs(sizes, model, trials)?;
    let k = TurnConfig::default().k;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let pool = synthetic_pool(size);
        let (mut single, mut vox) = (0.0, 0.0);
        for _ in 0..trials {
            let idle: Arc<dyn CandidateProposer> = Arc::new(FixedProposer::default());
            single += speak_turn(&pool, pool.ids(), false, idle, model, clock).await?;
            let proposer: Arc<dyn CandidateProposer> = Arc::new(ModeledProposer {
                inner: FixedProposer::default(),
                model: model.clone(),
                clock: clock.clone(),
            });
            vox += speak_turn(&pool, pool.ids().take(k), true, proposer, model, clock).await?;
        }
        rows.push(ScalingRow {
            pool_size: size,
            single_agent_s: single / trials as f64,
            voxkit_s: vox / trials as f64,
        });
    }
    rows.sort_by_key(|r| r.pool_size);
    Ok(ScalingReport { k, rows })
}

pub fn simulate_scaling_compare(
    sizes: &[usize],
    model: &DelayModel,
    trials: usize,
) -> Result<ScalingReport, BenchError> {
    let rt = VirtualClock::runtime().map_err(IoError::from)?;
    rt.block_on(async { run_scaling_compare(sizes, model, trials, &VirtualClock::shared()).await })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReport {
    pub turns: usize,
    pub think_avg: f64,
    pub answer_avg: f64,
    /// `think_avg / answer_avg`; absent when no answer tokens were produced.
    pub ratio: Option<f64>,
}

impl TokenReport {
    pub fn from_averages(turns: usize, think_avg: f64, answer_avg: f64) -> Self {
        let ratio = if think_avg == 0.0 {
            Some(0.0)
        } else if answer_avg > 0.0 {
            Some(think_avg / answer_avg)
        } else {
            None
        };
        Self {
            turns,
            think_avg,
            answer_avg,
            ratio,
        }
    }

    pub fn ratio_percent(&self) -> Option<f64> {
        self.ratio.map(|r| r * 100.0)
    }
}

/// Averages think and answer tokens per turn, over every decision of a turn.
pub fn token_accounting(transcripts: &[TurnRecord]) -> Result<TokenReport, BenchError> {
    if transcripts.is_empty() {
        return Err(BenchError::InvalidInput("no turns to account".into()));
    }
    let (think, answer) = transcripts
        .iter()
        .flat_map(|t| t.decisions())
        .fold((0u64, 0u64), |(a, b), d| {
            (a + d.timing.tokens_think, b + d.timing.tokens_answer)
        });
    let n = transcripts.len() as f64;
    Ok(TokenReport::from_averages(
        transcripts.len(),
        think as f64 / n,
        answer as f64 / n,
    ))
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.plot.json` into `dir`.
pub fn write_sweep_outputs(dir: &Path, stem: &str, report: &SweepReport) -> Result<(), BenchError> {
    let json = serde_json::to_string_pretty(report).map_err(IoError::from)?;
    let plot = serde_json::to_string_pretty(&report.plot_data()).map_err(IoError::from)?;
    atomic_write(dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())?;
    atomic_write(dir.join(format!("{stem}.json")), json.as_bytes())?;
    atomic_write(dir.join(format!("{stem}.plot.json")), plot.as_bytes())?;
    Ok(())
}

pub fn write_scaling_outputs(
    dir: &Path,
    stem: &str,
    report: &ScalingReport,
) -> Result<(), BenchError> {
    let json = serde_json::to_string_pretty(report).map_err(IoError::from)?;
    let plot = serde_json::to_string_pretty(&report.plot_data()).map_err(IoError::from)?;
    atomic_write(dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())?;
    atomic_write(dir.join(format!("{stem}.json")), json.as_bytes())?;
    atomic_write(dir.join(format!("{stem}.plot.json")), plot.as_bytes())?;
    Ok(())
}
