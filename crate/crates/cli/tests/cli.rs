use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use voxkit_core::codec::parse_assistant_output;
use voxkit_core::datagen::{reference_corpus, DatasetManifest, RetainedRecord, REFERENCE_COMPOSITION};
use voxkit_core::io::{read_jsonl, to_jsonl, write_jsonl};
use voxkit_core::model::AgentAction;
use voxkit_core::orchestrator::read_transcript;

fn fixture(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(path)
}

fn voxkit(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_voxkit"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn voxkit");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_unknown_flags() {
    for cmd in [&["--help"][..], &["chat", "--help"], &["judge", "--help"], &["bench", "--help"], &["datagen", "--help"]] {
        assert_eq!(voxkit(cmd, "").status.code(), Some(0), "{cmd:?}");
    }
    assert_eq!(voxkit(&["bench", "--no-such-flag"], "").status.code(), Some(2));
    assert_eq!(voxkit(&["frobnicate"], "").status.code(), Some(2));
    assert_eq!(voxkit(&["datagen", "x.jsonl", "--stage", "bogus", "--out", "y"], "").status.code(), Some(2));
}

fn chat_args<'a>(pool: &'a str, script: &'a str, results: &'a str, transcript: &'a str) -> Vec<&'a str> {
    vec![
        "chat", "--backend", "scripted", "--pool", pool, "--script", script, "--tool-results", results,
        "--show-think", "--transcript", transcript,
    ]
}

#[test]
fn chat_replays_headset_flow() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let (pool, script, results) =
        (fixture("headset/pool.json"), fixture("headset/script.jsonl"), fixture("headset/tool_results.json"));
    let input = std::fs::read_to_string(fixture("headset/input.txt")).unwrap();
    let out = voxkit(
        &chat_args(s(&pool), s(&script), s(&results), s(&transcript)),
        &format!("\n   \n{}\n", input.trim()),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    // two blank lines re-prompt without consuming a turn
    assert_eq!(text.matches("> ").count(), 4);
    let roles: Vec<&str> = text
        .lines()
        .map(|l| l.trim_start_matches("> "))
        .filter_map(|l| l.split_once(':').map(|(r, _)| r))
        .filter(|r| *r != "think")
        .collect();
    assert_eq!(roles, ["tool", "observation", "tool", "observation", "speak"]);
    assert_eq!(text.matches("think: ").count(), 3);

    let written = std::fs::read_to_string(&transcript).unwrap();
    let records = read_transcript(&transcript).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(to_jsonl(&records).unwrap(), written);
    let script_lines: Vec<serde_json::Value> = std::fs::read_to_string(&script)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let expected: Vec<AgentAction> = script_lines
        .iter()
        .filter(|v| v["phase"] == "act")
        .map(|v| parse_assistant_output(v["text"].as_str().unwrap()).unwrap().action)
        .collect();
    let actual: Vec<AgentAction> = records[0].decisions().map(|d| d.action.clone()).collect();
    assert_eq!(actual, expected);
}

#[test]
fn chat_errors() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let (pool, script, results) =
        (fixture("headset/pool.json"), fixture("headset/script.jsonl"), fixture("headset/tool_results.json"));
    let out = voxkit(&["chat", "--pool", s(&pool)], "hi\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--script"));

    let out = voxkit(&["chat", "--pool", s(&dir.path().join("missing.json")), "--script", s(&script)], "");
    assert_eq!(out.status.code(), Some(2));

    // the script covers one turn; the second exhausts it
    let out = voxkit(&chat_args(s(&pool), s(&script), s(&results), s(&transcript)), "first\nsecond\n");
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(read_transcript(&transcript).unwrap().len(), 1);
}

fn corpus_line(capability: &str, target: &str, output: &str) -> String {
    serde_json::json!({"capability": capability, "target": target, "output": output}).to_string()
}

#[test]
fn judge_single_identical_item() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let verdicts = dir.path().join("v.jsonl");
    let call = r#"[{"name": "weather", "arguments": {"city": "Rome"}}]"#;
    std::fs::write(&corpus, corpus_line("single_task", call, call) + "\n").unwrap();
    let out = voxkit(&["judge", s(&corpus), "--out", s(&verdicts)], "");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(&verdicts).unwrap(),
        "{\"func_select_correct\": true, \"param_fill_correct\": true}\n"
    );
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(metrics["ts"], 100.0);
    assert_eq!(metrics["pf"], 100.0);
}

#[test]
fn judge_mixed_corpus_matches_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let metrics_path = dir.path().join("m.json");
    let caps = ["single_task", "task_decomposition", "parallel_processing", "contextual_planning"];
    let (mut ts_hits, mut pf_hits) = (0, 0);
    let mut lines = String::new();
    for i in 0..200 {
        let target = format!("lookup(id={i}, unit='m')");
        let output = match i % 4 {
            0 => format!("Sure: lookup(unit=\"m\", id={i}.0)"),
            1 => format!("lookup(id={}, unit='m')", i + 1),
            2 => format!("search(id={i}, unit='m')"),
            _ => format!("[lookup(id={i}, unit='m'), lookup(id={i}, unit='m')]"),
        };
        ts_hits += usize::from(i % 4 <= 1);
        pf_hits += usize::from(i % 4 == 0);
        lines += &corpus_line(caps[i % 4], &target, &output);
        lines.push('\n');
    }
    std::fs::write(&corpus, lines).unwrap();
    let out = voxkit(&["judge", s(&corpus), "--metrics", s(&metrics_path)], "");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert_eq!(metrics["n_items"], 200);
    assert!((metrics["ts"].as_f64().unwrap() - 100.0 * ts_hits as f64 / 200.0).abs() < 1e-9);
    assert!((metrics["pf"].as_f64().unwrap() - 100.0 * pf_hits as f64 / 200.0).abs() < 1e-9);
}

#[test]
fn judge_malformed_corpus_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let ok = corpus_line("single_task", "f()", "f()");
    std::fs::write(&corpus, format!("{ok}\n{ok}\n{{\"capability\": 3}}\n")).unwrap();
    let out = voxkit(&["judge", s(&corpus)], "");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn bench_default_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = voxkit(&["bench", "--trials", "1", "--out", s(d)], "");
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let csv = std::fs::read_to_string(a.join("latency_sweep.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("latency_sweep.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "pool_size,aux_duration_s,waiting_overhead_s,turn_wall_s");
    let sizes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["10", "25", "50", "75", "100"]);
    assert!(a.join("latency_sweep.json").exists() && a.join("latency_sweep.plot.json").exists());
}

#[test]
fn bench_scaling_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = voxkit(&["bench", "--sizes", "1,10,50", "--scaling", "--out", s(dir.path())], "");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    assert_eq!(voxkit(&["bench", "--trials", "0"], "").status.code(), Some(2));
    let model = dir.path().join("model.json");
    std::fs::write(&model, r#"{"act_base": "fast"}"#).unwrap();
    assert_eq!(voxkit(&["bench", "--delay-model", s(&model)], "").status.code(), Some(2));
    assert_eq!(
        voxkit(&["bench", "--delay-model", s(&model), "--point-fit"], "").status.code(),
        Some(2)
    );
}

fn write_corpus(path: &Path, queries: &[&str]) {
    let records: Vec<serde_json::Value> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            serde_json::json!({
                "id": format!("q{i:02}"), "query": q, "answer": "Done.",
                "category": "dialog", "duration_seconds": 4.0
            })
        })
        .collect();
    let text: String = records.iter().map(|r| r.to_string() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

const QUERIES: [&str; 8] = [
    "what's the weather like",
    "tell me a story",
    "price of a flight to Oslo",
    "how are you",
    "book a table for two",
    "explain gravity",
    "what is on my schedule today",
    "sing something",
];

#[test]
fn datagen_cot_with_constant_ten_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, config, out_path) =
        (dir.path().join("c.jsonl"), dir.path().join("cfg.json"), dir.path().join("o.jsonl"));
    write_corpus(&corpus, &QUERIES);
    std::fs::write(&config, r#"{"strategy": {"kind": "stub", "score": 10}}"#).unwrap();
    let out = voxkit(
        &["datagen", s(&corpus), "--stage", "cot", "--config", s(&config), "--out", s(&out_path)],
        "",
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let retained: Vec<RetainedRecord> = read_jsonl(&out_path).unwrap();
    assert_eq!(retained.len(), QUERIES.len());
    assert!(retained.iter().all(|r| r.attempts == 1));
    assert!(stdout(&out).contains("retained 8, discarded 0, skipped 0"));
}

#[test]
fn datagen_necessity_matches_keyword_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, out_path) = (dir.path().join("c.jsonl"), dir.path().join("o.jsonl"));
    write_corpus(&corpus, &QUERIES);
    let out = voxkit(&["datagen", s(&corpus), "--stage", "necessity", "--out", s(&out_path)], "");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let kept: Vec<serde_json::Value> = read_jsonl(&out_path).unwrap();
    let kept: Vec<&str> = kept.iter().map(|r| r["query"].as_str().unwrap()).collect();
    let keywords = ["weather", "price", "book", "search", "latest", "today", "order", "schedule"];
    let oracle: Vec<&str> =
        QUERIES.iter().copied().filter(|q| keywords.iter().any(|k| q.contains(k))).collect();
    assert_eq!(kept, oracle);
}

#[test]
fn datagen_compose_reference_half_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, out_path) = (dir.path().join("s.jsonl"), dir.path().join("m.json"));
    write_jsonl(&corpus, &reference_corpus()).unwrap();
    let out = voxkit(
        &["datagen", s(&corpus), "--stage", "compose", "--ratio", "1:0.5", "--out", s(&out_path)],
        "",
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    for (category, _, _, samples, hours) in REFERENCE_COMPOSITION {
        let e = manifest.entry(category).unwrap();
        assert!(e.sample_count.abs_diff(samples) <= 1, "{category}: {}", e.sample_count);
        assert!((e.duration_hours - hours).abs() <= hours * 0.005 + 0.005, "{category}: {}", e.duration_hours);
    }
    assert!((manifest.total_hours() - 163.62).abs() < 163.62 * 0.005);
    assert!(stdout(&out).contains("achieved 1:0.5"), "{}", stdout(&out));
}

#[test]
fn datagen_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, config) = (dir.path().join("c.jsonl"), dir.path().join("cfg.json"));
    write_corpus(&corpus, &QUERIES[..1]);
    let run = || {
        voxkit(
            &["datagen", s(&corpus), "--stage", "cot", "--config", s(&config), "--out", s(&dir.path().join("o"))],
            "",
        )
    };
    std::fs::write(&config, r#"{"strategy": {"kind": "llm"}, "backend": {"endpoint": "${VOXKIT_TEST_UNSET_VAR}"}}"#)
        .unwrap();
    assert_eq!(run().status.code(), Some(2));
    std::fs::write(&config, r#"{"pipeline": {"tau": 12}}"#).unwrap();
    assert_eq!(run().status.code(), Some(2));
    std::fs::write(&corpus, "{\"id\": 1}\n").unwrap();
    std::fs::write(&config, "{}").unwrap();
    let out = run();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"));
}
