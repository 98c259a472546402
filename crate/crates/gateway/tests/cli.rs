mod support;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use support::TestApp;

fn canvas(db: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canvas"))
        .arg("--db")
        .arg(db)
        .args(args)
        .env_remove("CANVAS_DB")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

/// The error document is the last stderr line; log output may precede it.
fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::TempDir::new().unwrap();
    let db = dir.path().join("c.db");
    assert_eq!(canvas(&db, &["bogus"]).status.code(), Some(2));
    assert_eq!(canvas(&db, &["stats"]).status.code(), Some(2));
    assert_eq!(canvas(&db, &["search", "--page", "x"]).status.code(), Some(2));
    assert_eq!(canvas(&db, &["--help"]).status.code(), Some(0));
    assert_eq!(canvas(&db, &["health"]).status.code(), Some(0));

    let out = canvas(&db, &["--json", "job", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = stderr_json(&out);
    assert_eq!(err["code"], "NotFound");

    let out = canvas(&db, &["search", "--query", "text.nope ~ 'x'"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ParseError"));
    let out = canvas(&db, &["ingest", "r", "--spec", "/nonexistent/spec.json", "f.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn env_db_overrides_flag() {
    let dir = tempfile::TempDir::new().unwrap();
    let flag_db = dir.path().join("flag.db");
    let env_db = dir.path().join("env.db");
    let out = Command::new(env!("CARGO_BIN_EXE_canvas"))
        .args(["--db", flag_db.to_str().unwrap(), "create-run", "--name", "x", "--source", "zh-en"])
        .env("CANVAS_DB", &env_db)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_db.exists());
    assert!(!flag_db.exists());
}

#[test]
fn workflow_and_api_parity() {
    let app = TestApp::new();
    let db = app.db();
    let dir = app.dir.path();

    let run_a = stdout_json(&canvas(&db, &["--json", "create-run", "--name", "a", "--source", "zh", "--target", "en", "--metrics", "bleu,baseline"]));
    let a = run_a["id"].as_str().unwrap().to_string();
    let run_b = stdout_json(&canvas(&db, &["--json", "create-run", "--name", "b", "--source", "zh-en"]));
    let b = run_b["id"].as_str().unwrap().to_string();

    std::fs::write(
        dir.join("a.jsonl"),
        "{\"source\":\"一\",\"prediction\":\"the cat\",\"reference\":\"the cat sat on the mat\"}\n{\"source\":\"二\",\"prediction\":\"a dog ran\",\"reference\":\"a dog ran\"}\n",
    )
    .unwrap();
    let added = stdout_json(&canvas(&db, &["--json", "add-instances", &a, dir.join("a.jsonl").to_str().unwrap()]));
    assert_eq!(added["count"], 2);

    std::fs::write(dir.join("b.tsv"), "一\tthe cat sat\tthe cat sat on the mat\n二\ta dog\ta dog ran\n").unwrap();
    std::fs::write(dir.join("spec.json"), r#"{"mode":"tsv_columns","columns":{"source":0,"prediction":1,"reference":2}}"#).unwrap();
    let spec = dir.join("spec.json");
    let tsv = dir.join("b.tsv");
    let preview = stdout_json(&canvas(&db, &["--json", "ingest", &b, "--spec", spec.to_str().unwrap(), tsv.to_str().unwrap(), "--dry-run"]));
    assert_eq!(preview["count"], 2);
    let added = stdout_json(&canvas(&db, &["--json", "ingest", &b, "--spec", spec.to_str().unwrap(), tsv.to_str().unwrap()]));
    assert_eq!(added["count"], 2);

    let job = stdout_json(&canvas(&db, &["--json", "evaluate", &a]));
    assert_eq!(job["state"], "done", "{job}");
    let job = stdout_json(&canvas(&db, &["--json", "evaluate", &b, "--metrics", "baseline"]));
    assert_eq!(job["state"], "done");
    assert_eq!(stdout_json(&canvas(&db, &["--json", "job", job["id"].as_str().unwrap()]))["state"], "done");

    let rt = tokio::runtime::Runtime::new().unwrap();

    // stats equals the compare endpoint
    let cli = canvas(&db, &["--json", "stats", "--runs", &format!("{a},{b}")]);
    let api = rt.block_on(app.ok("POST", "/api/dashboard/compare", Some(json!({"run_ids": [a, b]}))));
    assert_eq!(stdout_json(&cli), api);
    assert_eq!(serde_json::to_string(&stdout_json(&cli)).unwrap(), serde_json::to_string(&api).unwrap());

    let query = "error.type ~ '%missing content%'";
    let cli = stdout_json(&canvas(&db, &["--json", "search", "--runs", &format!("{a},{b}"), "--query", query]));
    let api = rt.block_on(app.ok("POST", "/api/search", Some(json!({"query": query, "run_ids": [a, b]}))));
    assert_eq!(cli, api);
    assert_eq!(cli["total"], 2);

    let groups = stdout_json(&canvas(&db, &["--json", "groups"]));
    assert_eq!(groups, rt.block_on(app.ok("GET", "/api/groups", None)));
    let summary = stdout_json(&canvas(&db, &["--json", "summary", &a]));
    assert_eq!(summary, rt.block_on(app.ok("GET", &format!("/api/runs/{a}/summary"), None)));
    let runs = stdout_json(&canvas(&db, &["--json", "runs"]));
    assert_eq!(runs, rt.block_on(app.ok("GET", "/api/runs", None)));

    let key = groups["items"][0]["group_key"].as_str().unwrap().to_string();
    let order = format!("{b},{a}");
    let out = stdout_json(&canvas(&db, &["--json", "rank", "--group", &key, "--order", &order, "--session", "s9", "--consent"]));
    assert_eq!(out["stored"], true);
    let out = canvas(&db, &["rank", "--group", &key, "--order", &a, "--session", "s9", "--consent"]);
    assert_eq!(out.status.code(), Some(1));
    let export = canvas(&db, &["export-feedback"]);
    let (_, api_export) = rt.block_on(app.raw("GET", "/api/feedback/export", None, Vec::new()));
    assert_eq!(export.stdout, api_export);
    assert_eq!(String::from_utf8(export.stdout).unwrap().lines().count(), 1);
    assert_eq!(stdout_json(&canvas(&db, &["--json", "revoke", "s9"]))["deleted"], 1);

    let exported = canvas(&db, &["export", &a]);
    let (_, api_exported) = rt.block_on(app.raw("GET", &format!("/api/runs/{a}/export"), None, Vec::new()));
    assert_eq!(exported.stdout, api_exported);
    std::fs::write(dir.join("a.export.jsonl"), &exported.stdout).unwrap();
    let c = stdout_json(&canvas(&db, &["--json", "create-run", "--name", "c", "--source", "zh-en"]));
    let c = c["id"].as_str().unwrap();
    let imported = stdout_json(&canvas(&db, &["--json", "import", c, dir.join("a.export.jsonl").to_str().unwrap()]));
    assert_eq!(imported["instances"], 2);
    assert_eq!(canvas(&db, &["export", c]).stdout, exported.stdout);

    // human mode prints tables
    let text = String::from_utf8(canvas(&db, &["stats", "--runs", &format!("{a},{b}")]).stdout).unwrap();
    assert!(text.contains("error type"), "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("---"));
    let text = String::from_utf8(canvas(&db, &["search", "--query", query]).stdout).unwrap();
    assert!(text.starts_with("2 group(s) match"), "{text}");
}

#[test]
fn adapters_from_config_file() {
    let dir = tempfile::TempDir::new().unwrap();
    let db = dir.path().join("c.db");
    let config = dir.path().join("adapters.toml");
    std::fs::write(
        &config,
        r#"
[adapters.comet]
command = "sh -c 'n=0; while read -r l; do echo \"{\\\"index\\\":$n,\\\"score\\\":0.25}\"; n=$((n+1)); done'"

[adapters.broken]
command = ["sh", "-c", "cat >/dev/null; echo bad model >&2; exit 4"]
env = { MODEL = "x" }
"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--adapters", config.to_str().unwrap()];
        full.extend_from_slice(args);
        canvas(&db, &full)
    };
    let r = stdout_json(&run(&["--json", "create-run", "--name", "x", "--source", "de-en"]));
    let id = r["id"].as_str().unwrap();
    std::fs::write(dir.path().join("i.json"), r#"[{"prediction":"a"},{"prediction":"b"}]"#).unwrap();
    stdout_json(&run(&["--json", "add-instances", id, dir.path().join("i.json").to_str().unwrap()]));
    let job = stdout_json(&run(&["--json", "evaluate", id, "--metrics", "comet", "--devices", "cuda:0,cuda:1"]));
    assert_eq!(job["device_hints"], json!(["cuda:0", "cuda:1"]));
    let summary = stdout_json(&run(&["--json", "summary", id]));
    assert_eq!(summary["mean_scores"]["comet"], 0.25);

    let out = run(&["--json", "evaluate", id, "--metrics", "broken"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = stderr_json(&out);
    assert_eq!(err["code"], "JobFailed");
    assert!(err["details"]["diagnostics"].as_str().unwrap().contains("bad model"));

    let out = canvas(&db, &["--json", "evaluate", id, "--metrics", "comet"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = stderr_json(&out);
    assert_eq!(err["code"], "AdapterMissing");

    std::fs::write(&config, "adapters = 5").unwrap();
    let out = run(&["runs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigError"));
}
