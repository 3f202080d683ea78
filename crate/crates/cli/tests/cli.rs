use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::{json, Value};
use sgalign_core::agent::{append_trace, Agent, ScriptedBackend, SessionState};
use sgalign_core::graph_text::ingest;
use sgalign_core::spatial::RelationConfig;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgalign"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SGALIGN_BASE_URL")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn relations_prints_stored_and_viewer_relations() {
    let scene = fixture("scenes/demo_room.json");
    let out = run(&["relations", path(&scene)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.contains("(id: 7)") && l.contains("book (id: 5)")),
        "{text}"
    );

    let v = stdout_json(&run(&[
        "relations",
        path(&scene),
        "--viewer",
        "0,-3,1.6,0",
        "--json",
    ]));
    assert_eq!(v["scene_id"], "demo_room");
    let stored = v["stored"].as_array().unwrap();
    assert!(stored.contains(&json!({"subject": 7, "predicate": "support", "object": 5})));
    assert!(stored
        .iter()
        .all(|r| !["left", "right", "in_front", "behind"]
            .contains(&r["predicate"].as_str().unwrap())));
    assert!(!v["viewer"].as_array().unwrap().is_empty());
}

#[test]
fn bad_input_fails_cleanly() {
    let scene = fixture("scenes/demo_room.json");
    assert!(!run(&["relations", path(&scene), "--viewer", "1,2"])
        .status
        .success());
    assert!(!run(&["relations", "/no/such/scene.json"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "eval",
        "qa",
        "--file",
        path(&fixture("qa.jsonl")),
        "--scenes",
        path(&fixture("scenes")),
        "--report",
        path(&dir.path().join("r.jsonl")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SGALIGN_BASE_URL"));
}

#[test]
fn eval_qa_scores_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let (qa, scenes, script) = (
        fixture("qa.jsonl"),
        fixture("scenes"),
        fixture("scripts/qa.json"),
    );
    let args = [
        "eval",
        "qa",
        "--file",
        path(&qa),
        "--scenes",
        path(&scenes),
        "--report",
        path(&report),
        "--script",
        path(&script),
    ];
    let first = stdout_json(&run(&args));
    assert_eq!(first["items"], 3);
    assert!(first["em"]["mean"].as_f64().unwrap() > 0.0);
    let lines = fs::read_to_string(&report).unwrap();
    assert_eq!(lines.lines().count(), 4);

    let out = run(&args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("resumed 3 rows"));
    assert_eq!(stdout_json(&out), first);
}

#[test]
fn eval_session_aggregates_logged_traces() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("scenes/demo_room.json")).unwrap();
    let mut session = SessionState::new(ingest(&text, &RelationConfig::default()).unwrap());
    let agent = Agent::new(Arc::new(
        ScriptedBackend::load(&fixture("scripts/session_bundle.json")).unwrap(),
    ));
    let log = dir.path().join("traces/s1/trace.jsonl");
    for (i, input) in [
        "What is on the blue box?",
        "The book on the blue box is actually a sketchbook.",
        "Where is the sketchbook?",
    ]
    .iter()
    .enumerate()
    {
        let trace = agent.run(
            format!("s1-{:04}", i + 1),
            input,
            None,
            Some("sketch".into()),
            &mut session,
        );
        append_trace(&log, &trace).unwrap();
    }
    let ratings = dir.path().join("ratings.jsonl");
    fs::write(
        &ratings,
        [
            json!({"interaction_id": "s1-0001", "reasonable": true}),
            json!({"interaction_id": "s1-0002", "reasonable": false}),
            json!({"interaction_id": "s1-0003", "reasonable": true, "task_success": true}),
        ]
        .map(|v| v.to_string())
        .join("\n"),
    )
    .unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    fs::write(
        &tasks,
        json!({"task_id": "sketch", "question": "Where is the sketchbook?", "answers": ["on the blue box"]}).to_string(),
    )
    .unwrap();
    let judge = dir.path().join("judge.json");
    fs::write(
        &judge,
        json!({"interactions": [{"input_contains": "", "steps": [{"response": "YES"}], "repeat_last": true}]}).to_string(),
    )
    .unwrap();

    let v = stdout_json(&run(&[
        "eval",
        "session",
        "--traces",
        path(&dir.path().join("traces")),
        "--ratings",
        path(&ratings),
        "--tasks",
        path(&tasks),
        "--judge-script",
        path(&judge),
    ]));
    assert_eq!(v["interactions"], 3);
    assert_eq!(v["interactions_per_task"], 3.0);
    assert_eq!(v["actions_per_interaction"], 3.0);
    assert!((v["rr_interaction"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-9);
    assert_eq!(v["sr_human"], 1.0);
    assert_eq!(v["sr_llm"], 1.0);
    assert_eq!(v["flagged_verdicts"], json!([]));
}
