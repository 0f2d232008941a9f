#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use voxkit_core::clock::SharedClock;
use voxkit_core::judge::JudgeVerdict;
use voxkit_core::model::{ObservationEvent, Profile, SessionState, TurnRecord};
use voxkit_core::orchestrator::{Orchestrator, PolicyBackendSet, ScriptedExecutor, ToolExecutorRegistry, TurnConfig};
use voxkit_core::policy::{PolicyBackend, ScriptStep, ScriptedBackend};
use voxkit_core::tool_space::{CandidateProposer, FixedProposer, GlobalToolPool};

pub fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(path)
}

pub fn read_fixture(path: &str) -> String {
    std::fs::read_to_string(fixture(path)).expect("fixture present")
}

pub struct Headset {
    pub pool: GlobalToolPool,
    pub steps: Vec<ScriptStep>,
    pub results_json: String,
    pub user_text: String,
}

pub fn headset() -> Headset {
    let steps = read_fixture("headset/script.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("script line"))
        .collect();
    Headset {
        pool: GlobalToolPool::from_json(&read_fixture("headset/pool.json")).expect("pool"),
        steps,
        results_json: read_fixture("headset/tool_results.json"),
        user_text: read_fixture("headset/input.txt").trim().to_string(),
    }
}

/// Runs the headset support conversation through scripted backends and executors.
pub async fn replay_headset(clock: SharedClock) -> TurnRecord {
    let f = headset();
    let backend: Arc<dyn PolicyBackend> = Arc::new(ScriptedBackend::new(f.steps, clock.clone()));
    let proposer: Arc<dyn CandidateProposer> = Arc::new(FixedProposer::default());
    let executor = ScriptedExecutor::from_json(&f.results_json).expect("results");
    let mut registry = ToolExecutorRegistry::new();
    executor.register_all(&mut registry);
    let session = SessionState::new(Profile::default()).with_local_tools(f.pool.ids().collect::<Vec<_>>());
    let mut orch = Orchestrator::new(
        session,
        Arc::new(f.pool),
        PolicyBackendSet::single(backend, proposer),
        registry,
        TurnConfig::default(),
        clock,
    )
    .expect("valid session");
    orch.run_turn(vec![ObservationEvent::user(f.user_text)]).await.expect("replay turn")
}

// ---------------------------------------------------------------------------
// Judge case generation. Each call carries a ground-truth class id; the text
// rendering picks random but equivalent surface forms for every value.

pub const PROSE: &[&str] = &[
    "Sure thing",
    "Let me check that for you",
    "Here are the calls I will make",
    "Okay",
    "Calling the tools now",
    "One moment please",
];

/// A rendered value of parameter `i` for bit `bit`.
pub fn surface_value<R: Rng>(rng: &mut R, i: usize, bit: bool) -> String {
    if bit {
        let s = ["Taylor Swift", "New York", "blue", "Hyper X"][i % 4];
        if rng.gen_bool(0.5) {
            format!("'{s}'")
        } else {
            format!("\"{s}\"")
        }
    } else {
        let n = 40 + i;
        match rng.gen_range(0..3) {
            0 => format!("{n}"),
            1 => format!("{n}.0"),
            _ => format!("{n}.00"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrueCall {
    pub name: String,
    /// One bit per parameter.
    pub class: u32,
    pub params: usize,
}

pub fn render_call<R: Rng>(rng: &mut R, call: &TrueCall) -> String {
    let mut args: Vec<String> = (0..call.params)
        .map(|i| format!("p{i}={}", surface_value(rng, i, call.class >> i & 1 == 1)))
        .collect();
    args.shuffle(rng);
    format!("{}({})", call.name, args.join(", "))
}

pub fn render_calls<R: Rng>(rng: &mut R, calls: &[TrueCall]) -> String {
    let body: Vec<String> = calls.iter().map(|c| render_call(rng, c)).collect();
    let list = format!("[{}]", body.join(", "));
    if rng.gen_bool(0.5) {
        format!("{}: {list}", PROSE.choose(rng).unwrap())
    } else {
        list
    }
}

/// Selection: same multiset of names.
pub fn oracle_selection(target: &[TrueCall], output: &[TrueCall]) -> bool {
    let mut a: Vec<&str> = target.iter().map(|c| c.name.as_str()).collect();
    let mut b: Vec<&str> = output.iter().map(|c| c.name.as_str()).collect();
    a.sort();
    b.sort();
    a == b
}

/// Tries every ordering of `output[k..]` against `target[k..]`.
fn any_permutation_matches(target: &[TrueCall], output: &mut [TrueCall], k: usize) -> bool {
    if k == output.len() {
        return target == output;
    }
    for i in k..output.len() {
        output.swap(k, i);
        let hit = any_permutation_matches(target, output, k + 1);
        output.swap(k, i);
        if hit {
            return true;
        }
    }
    false
}

/// Parameter filling by brute force over every ordering of the output calls.
pub fn oracle_param_fill(target: &[TrueCall], output: &[TrueCall]) -> bool {
    oracle_selection(target, output) && any_permutation_matches(target, &mut output.to_vec(), 0)
}

/// Non-decreasing sequences of length `len` over `0..classes`.
pub fn multisets(classes: u32, len: usize) -> Vec<Vec<u32>> {
    fn rec(classes: u32, len: usize, start: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for c in start..classes {
            cur.push(c);
            rec(classes, len, c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(classes, len, 0, &mut Vec::new(), &mut out);
    out
}

pub fn oracle_verdict(target: &[TrueCall], output: &[TrueCall]) -> JudgeVerdict {
    let sel = oracle_selection(target, output);
    JudgeVerdict {
        func_select_correct: sel,
        param_fill_correct: sel && oracle_param_fill(target, output),
    }
}

pub fn random_calls<R: Rng>(rng: &mut R) -> Vec<TrueCall> {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| {
            let params = rng.gen_range(0..=3);
            TrueCall {
                name: ["lookup", "search", "play_music"].choose(rng).unwrap().to_string(),
                class: rng.gen_range(0..1u32 << params),
                params,
            }
        })
        .collect()
}

pub fn perturb<R: Rng>(rng: &mut R, calls: &[TrueCall]) -> Vec<TrueCall> {
    let mut out = calls.to_vec();
    match rng.gen_range(0..4) {
        0 => {}
        1 => {
            let c = out.choose_mut(rng).unwrap();
            if c.params > 0 {
                c.class ^= 1 << rng.gen_range(0..c.params);
            }
        }
        2 => out.choose_mut(rng).unwrap().name = "set_alarm".into(),
        _ => {
            if out.len() > 1 {
                out.pop();
            }
        }
    }
    out.shuffle(rng);
    out
}
