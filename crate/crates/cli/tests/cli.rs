//! Exit codes, output formats and golden output of the `newsstance` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic.jsonl")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsstance"))
        .args(args)
        .env_remove("NEWSSTANCE_CONFIG")
        .env_remove("NEWSSTANCE_CACHE_DIR")
        .env_remove("NEWSSTANCE_CORPUS")
        .env_remove("NEWSSTANCE_LLM_ENDPOINT")
        .env_remove("NEWSSTANCE_AGENT_ENDPOINT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

/// Classifier that answers garbage for every other request.
fn flaky_classifier() -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/classify", server.server_addr().to_ip().unwrap());
    thread::spawn(move || {
        for (i, mut req) in server.incoming_requests().enumerate() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let reply = if i % 2 == 0 { r#"{"label":"neutral"}"# } else { r#"{"label":"maybe"}"# };
            let _ = req.respond(tiny_http::Response::from_string(reply));
        }
    });
    url
}

#[test]
fn validate_reports_counts() {
    let o = run(&["validate", fixture().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["articles"], 34);
    assert_eq!(v["annotated"], 30);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["evaluate", "--config", "/nonexistent/run.toml"])), 1);
    assert_eq!(code(&run(&["validate", "/nonexistent/corpus.jsonl"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    // no corpus anywhere
    assert_eq!(code(&run(&["evaluate", "--llm", "mock"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 3}\n").unwrap();
    assert_eq!(code(&run(&["validate", bad.to_str().unwrap()])), 2);

    let toml = dir.path().join("run.toml");
    std::fs::write(&toml, "[run]\nseeds = []\n").unwrap();
    let f = fixture();
    let o = run(&["evaluate", "--config", toml.to_str().unwrap(), "--corpus", f.to_str().unwrap(), "--llm", "mock"]);
    assert_eq!(code(&o), 2);

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "colour = \"blue\"\n").unwrap();
    let o = run(&["evaluate", "--config", unknown.to_str().unwrap(), "--corpus", f.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unreachable_service_exits_3() {
    let f = fixture();
    let o = run(&[
        "evaluate", "--corpus", f.to_str().unwrap(), "--agent", "classifier",
        "--agent-endpoint", "http://127.0.0.1:9/classify", "--agent-model", "m", "--llm", "mock", "--seeds", "1",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn failure_budget_overrun_exits_4() {
    let url = flaky_classifier();
    let f = fixture();
    let o = run(&[
        "evaluate", "--corpus", f.to_str().unwrap(), "--agent", "classifier", "--agent-endpoint", &url,
        "--agent-model", "m", "--llm", "mock", "--seeds", "1", "--parallelism", "1",
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_evaluation_matches_golden() {
    let f = fixture();
    let o = run(&["evaluate", "--agent", "oracle", "--llm", "mock", "--corpus", f.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let got = String::from_utf8(o.stdout).unwrap();
    let path = golden("evaluate_oracle_mock.json");
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn out_file_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let f = fixture();
    let o = run(&[
        "--csv", "--out", out.to_str().unwrap(), "evaluate", "--agent", "oracle", "--llm", "mock",
        "--corpus", f.to_str().unwrap(), "--seeds", "1-3",
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,accuracy,macro_f1,f1_supportive,f1_neutral,f1_oppositional");
    assert_eq!(lines.len(), 1 + 3 + 2);
    assert!(lines[4].starts_with("mean,1,"));

    let o = run(&["--csv", "stats", f.to_str().unwrap(), "--test-fraction", "0.3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["split", "all", "train", "test"]);
}

#[test]
fn dry_run_touches_no_service_or_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let f = fixture();
    // the endpoint is unreachable, so any call would fail the command
    let o = run(&[
        "predict", "--dry-run", "--corpus", f.to_str().unwrap(), "--agent", "classifier",
        "--agent-endpoint", "http://127.0.0.1:9/classify", "--agent-model", "m",
        "--llm", "http://127.0.0.1:9/llm", "--cache-dir", cache.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let prompts = stdout_json(&o);
    let prompts = prompts.as_array().unwrap();
    // straight news is outside the default evaluation genres
    assert_eq!(prompts.len(), 30);
    assert!(prompts[0]["transcript"].as_str().unwrap().contains("### user"));
    assert_eq!(prompts[0]["prompt_hash"].as_str().unwrap().len(), 64);
    assert!(!cache.exists());
}

#[test]
fn cache_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let c = cache.to_str().unwrap();
    let f = fixture();
    let args = [
        "predict", "--corpus", f.to_str().unwrap(), "--agent", "classifier", "--agent-endpoint", "mock",
        "--agent-model", "m", "--llm", "mock", "--cache-dir", c, "--id", "maj-neutral-000",
    ];
    assert_eq!(code(&run(&args)), 0);
    let first = stdout_json(&run(&["cache", "stats", "--cache-dir", c]));
    let entries = first["entries"].as_u64().unwrap();
    assert!(entries > 0);
    assert_eq!(first["hits"], 0);

    let o = run(&args);
    assert_eq!(code(&o), 0);
    let second = stdout_json(&run(&["cache", "stats", "--cache-dir", c]));
    assert_eq!(second["entries"].as_u64(), Some(entries));
    assert_eq!(second["hits"].as_u64(), Some(entries));

    let index = stdout_json(&run(&["cache", "inspect", "--cache-dir", c]));
    assert_eq!(index["index"].as_array().unwrap().len() as u64, entries);

    assert_eq!(code(&run(&["cache", "clear", "--cache-dir", c])), 1);
    let o = run(&["cache", "clear", "--yes", "--cache-dir", c]);
    assert_eq!(stdout_json(&o)["removed"].as_u64(), Some(entries));
    assert_eq!(stdout_json(&run(&["cache", "stats", "--cache-dir", c]))["entries"], 0);
}

#[test]
fn predictions_feed_bias_report() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.json");
    let f = fixture();
    let o = run(&[
        "--out", preds.to_str().unwrap(), "predict", "--corpus", f.to_str().unwrap(), "--agent", "oracle", "--llm", "mock",
    ]);
    assert_eq!(code(&o), 0);
    let outlets = dir.path().join("outlets.json");
    let meta: serde_json::Map<String, Value> = (0..10)
        .map(|i| (format!("Outlet {i}"), Value::from(["progressive", "moderate", "conservative"][i % 3])))
        .collect();
    std::fs::write(&outlets, Value::Object(meta).to_string()).unwrap();
    let svg = dir.path().join("bias.svg");
    let o = run(&[
        "bias", "--corpus", f.to_str().unwrap(), "--predictions", preds.to_str().unwrap(),
        "--outlets", outlets.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn recommendation_over_gold_stances() {
    let dir = tempfile::tempdir().unwrap();
    let leanings = dir.path().join("leanings.json");
    let map: serde_json::Map<String, Value> = (0..6)
        .map(|i| {
            (
                format!("issue-{i}"),
                serde_json::json!({"supportive": "progressive", "neutral": "moderate", "oppositional": "conservative"}),
            )
        })
        .collect();
    std::fs::write(&leanings, Value::Object(map).to_string()).unwrap();
    let f = fixture();
    let o = run(&[
        "recommend", "--corpus", f.to_str().unwrap(), "--leanings", leanings.to_str().unwrap(), "--ks", "2,3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let rows = v["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r["diversity"].as_f64().unwrap())));
}
