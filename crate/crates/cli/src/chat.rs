use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use voxkit_core::clock::{MonotonicClock, SharedClock};
use voxkit_core::codec::{serialize_calls, serialize_observation, RETRIEVE_SENTINEL};
use voxkit_core::model::{AgentAction, Decision, ObservationEvent, SessionState, TurnRecord};
use voxkit_core::orchestrator::{
    write_transcript, HttpToolExecutor, Orchestrator, PolicyBackendSet, ScriptedExecutor,
    ToolExecutor, ToolExecutorRegistry,
};
use voxkit_core::policy::{HttpBackend, PolicyBackend, ScriptedBackend};
use voxkit_core::tool_space::{CandidateProposer, GlobalToolPool, LexicalProposer};

use crate::config::Config;
use crate::{BackendKind, ChatArgs, Failure};

pub const PROMPT: &str = "> ";

fn render_action(out: &mut String, action: &AgentAction) {
    match action {
        AgentAction::Speak { text } => {
            let _ = writeln!(out, "speak: {text}");
        }
        AgentAction::InvokeTools { calls } => {
            let _ = writeln!(out, "tool: {}", serialize_calls(calls));
        }
        AgentAction::Retrieve => {
            let _ = writeln!(out, "tool: {RETRIEVE_SENTINEL}");
        }
    }
}

fn render_decision(out: &mut String, d: &Decision, pool: &GlobalToolPool, show_think: bool) {
    if show_think {
        let _ = writeln!(out, "think: {}", d.reasoning.text);
    }
    render_action(out, &d.action);
    if let Some(followup) = &d.followup_action {
        let names: Vec<&str> = d
            .candidates_added
            .iter()
            .filter_map(|id| pool.get(*id).map(|s| s.name.as_str()))
            .collect();
        let _ = writeln!(out, "retrieved: {}", names.join(", "));
        if let (true, Some(r)) = (show_think, &d.followup_reasoning) {
            let _ = writeln!(out, "think: {}", r.text);
        }
        render_action(out, followup);
    }
    if !d.tool_results.is_empty() {
        let block = serialize_observation(&d.tool_results).expect("tool results are env feedback");
        let _ = writeln!(out, "observation: {block}");
    }
}

/// Human-readable flow of one turn, one role-prefixed line per step.
pub fn render_record(record: &TurnRecord, pool: &GlobalToolPool, show_think: bool) -> String {
    let mut out = String::new();
    for d in record.decisions() {
        render_decision(&mut out, d, pool, show_think);
    }
    out
}

fn backend(args: &ChatArgs, config: &Config, clock: SharedClock) -> Result<Arc<dyn PolicyBackend>, Failure> {
    match args.backend {
        BackendKind::Scripted => {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| Failure::usage("--backend scripted requires --script"))?;
            Ok(Arc::new(ScriptedBackend::load(path, clock).map_err(|e| {
                Failure::Usage(format!("script {}: {e}", path.display()))
            })?))
        }
        BackendKind::Http => Ok(Arc::new(
            HttpBackend::new(config.http_backend()?, clock).map_err(Failure::usage)?,
        )),
    }
}

fn registry(args: &ChatArgs, config: &Config, pool: &GlobalToolPool) -> Result<ToolExecutorRegistry, Failure> {
    let mut registry = ToolExecutorRegistry::new();
    if let Some(url) = &config.tool_endpoint {
        let http: Arc<dyn ToolExecutor> = Arc::new(HttpToolExecutor::new(url));
        for (_, spec) in pool.iter() {
            registry.register(spec.name.clone(), http.clone());
        }
    }
    if let Some(path) = &args.tool_results {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        ScriptedExecutor::from_json(&text)
            .map_err(|e| Failure::Usage(format!("tool results {}: {e}", path.display())))?
            .register_all(&mut registry);
    }
    Ok(registry)
}

fn initial_session(config: &Config, pool: &GlobalToolPool) -> Result<SessionState, Failure> {
    let ids = match &config.local_tools {
        Some(names) => names
            .iter()
            .map(|n| {
                pool.resolve(n)
                    .ok_or_else(|| Failure::Usage(format!("local tool `{n}` is not in the pool")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => pool.ids().take(config.turn.k).collect(),
    };
    Ok(SessionState::new(config.profile.clone()).with_local_tools(ids))
}

pub async fn run(args: ChatArgs) -> Result<(), Failure> {
    let config = Config::load(args.config.as_deref())?;
    let pool = GlobalToolPool::load(&args.pool)
        .map_err(|e| Failure::Usage(format!("pool {}: {e}", args.pool.display())))?;
    let clock = MonotonicClock::shared();
    let backend = backend(&args, &config, clock.clone())?;
    let proposer: Arc<dyn CandidateProposer> = Arc::new(LexicalProposer);
    let registry = registry(&args, &config, &pool)?;
    let session = initial_session(&config, &pool)?;
    let pool = Arc::new(pool);
    let mut orch = Orchestrator::new(
        session,
        pool.clone(),
        PolicyBackendSet::single(backend, proposer),
        registry,
        config.turn.clone(),
        clock,
    )
    .map_err(Failure::usage)?;

    let mut records = Vec::new();
    let result = repl(&mut orch, &pool, args.show_think, &mut records).await;
    if let Some(path) = &args.transcript {
        write_transcript(path, &records).map_err(Failure::runtime)?;
    }
    result
}

async fn repl(
    orch: &mut Orchestrator,
    pool: &GlobalToolPool,
    show_think: bool,
    records: &mut Vec<TurnRecord>,
) -> Result<(), Failure> {
    let limit = orch.config().max_turns.unwrap_or(usize::MAX);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let mut lines = stdin.lock().lines();
    while records.len() < limit {
        print!("{PROMPT}");
        stdout.flush().map_err(Failure::runtime)?;
        let Some(line) = lines.next() else { break };
        let line = line.map_err(Failure::runtime)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" {
            break;
        }
        let record = orch
            .run_turn(vec![ObservationEvent::user(text)])
            .await
            .map_err(Failure::runtime)?;
        print!("{}", render_record(&record, pool, show_think));
        records.push(record);
    }
    println!();
    Ok(())
}
