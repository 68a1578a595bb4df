#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use cohort_core::demo::{generate, DemoConfig};
use cohort_core::extract::{annotate, PipelineConfig};
use cohort_core::index::{read_snapshot, Schema};
use cohort_core::query::Restriction;
use cohort_server::state::{AppState, Dataset, ServerConfig};
use common::{oracle_evaluate, random_restrictions, Vocab};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cohort(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohort"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo_snapshot(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let out = dir.join(format!("demo-{n}-{seed}.snap"));
    let o = cohort(&["demo", "--patients", &n.to_string(), "--seed", &seed.to_string(), "--rates", "small", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

/// `/api/search` through the router, as a client would see it.
fn server_search(snapshot: &Path, restrictions: &[Restriction]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(ServerConfig::new(dir.path()), Dataset::load(snapshot).unwrap()).unwrap());
    let app = cohort_server::router(state);
    let body = serde_json::to_vec(&json!({ "restrictions": restrictions })).unwrap();
    let req = Request::post("/api/search").body(Body::from(body)).unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let resp = app.oneshot(req).await.unwrap();
        assert!(resp.status().is_success());
        serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap()
    })
}

fn lines(o: &Output) -> Vec<String> {
    String::from_utf8(o.stdout.clone()).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn demo_is_reproducible_and_may_be_empty() {
    let dir = tempfile::tempdir().unwrap();
    let empty = demo_snapshot(dir.path(), 0, 1);
    let (_, pats) = read_snapshot(&empty).unwrap();
    assert!(pats.is_empty());

    let a = fs::read(demo_snapshot(dir.path(), 12, 7)).unwrap();
    let again = dir.path().join("again.snap");
    let o = cohort(&["demo", "--patients", "12", "--seed", "7", "--rates", "small", "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(a, fs::read(&again).unwrap());
    assert_ne!(a, fs::read(demo_snapshot(dir.path(), 12, 8)).unwrap());
    let (_, pats) = read_snapshot(&again).unwrap();
    assert_eq!(pats, generate(&DemoConfig::small(12, 7)));

    let jsonl = dir.path().join("p.jsonl");
    let snap = dir.path().join("p.snap");
    let o = cohort(&["demo", "--patients", "3", "--rates", "paper", "--out", s(&snap), "--jsonl", s(&jsonl)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&jsonl).unwrap().lines().count(), 3);
}

#[test]
fn query_output_equals_server_search_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let snap = demo_snapshot(dir.path(), 60, 3);
    let (_, pats) = read_snapshot(&snap).unwrap();
    let relation = r#"[{"id": "rej", "type": "endpoint_relation",
        "a": {"kind": "rejection", "ordinal": "any"},
        "b": {"kind": "transplantation", "ordinal": "first"},
        "window": {"lower": 0, "upper": 3}}]"#;
    let mut sets: Vec<Vec<Restriction>> = vec![serde_json::from_str(relation).unwrap(), Vec::new()];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vocab = Vocab::of(&pats);
    sets.extend((0..8).map(|_| random_restrictions(&mut rng, &vocab, 3)));
    for (i, rs) in sets.iter().enumerate() {
        let file = dir.path().join(format!("q{i}.json"));
        fs::write(&file, serde_json::to_string(&json!({ "restrictions": rs })).unwrap()).unwrap();
        let o = cohort(&["query", "--snapshot", s(&snap), "--restrictions", &format!("@{}", s(&file))]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let ids = lines(&o);
        assert_eq!(ids, oracle_evaluate(&pats, rs));
        let server = server_search(&snap, rs);
        assert_eq!(json!(ids), server["patient_ids"]);

        let o = cohort(&["query", "--snapshot", s(&snap), "--format", "json", "--restrictions", s(&file)]);
        assert_eq!(code(&o), 0);
        let body: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(body, server);
    }
    let inline = cohort(&["query", "--snapshot", s(&snap), "--restrictions", relation]);
    assert_eq!(lines(&inline), oracle_evaluate(&pats, &sets[0]));
    assert!(!lines(&inline).is_empty());
}

#[test]
fn input_errors_exit_1_and_output_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let snap = demo_snapshot(dir.path(), 4, 1);
    let missing = dir.path().join("missing.snap");
    let bad_type = r#"[{"id": "x", "type": "nonsense"}]"#;
    let bad_field = r#"[{"id": "x", "type": "keyword", "field": "no.such", "term": "a"}]"#;
    for args in [
        vec!["query", "--snapshot", s(&snap), "--restrictions", "[{"],
        vec!["query", "--snapshot", s(&snap), "--restrictions", bad_type],
        vec!["query", "--snapshot", s(&snap), "--restrictions", bad_field],
        vec!["query", "--snapshot", s(&missing), "--restrictions", "[]"],
        vec!["query", "--snapshot", s(&snap), "--restrictions", "@/no/such/file.json"],
        vec!["index", "--manifest", "/no/such/manifest.toml", "--out", "x.snap"],
        vec!["annotate", "--in", "/no/such/dir", "--out", "x.jsonl"],
        vec!["frobnicate"],
        vec!["demo", "--patients", "many", "--out", "x.snap"],
    ] {
        let o = cohort(&args);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let o = cohort(&["query", "--snapshot", s(&snap), "--restrictions", bad_field]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("restrictions[0]"));

    let mut corrupt = fs::read(&snap).unwrap();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0xff;
    let bad_snap = dir.path().join("corrupt.snap");
    fs::write(&bad_snap, corrupt).unwrap();
    assert_eq!(code(&cohort(&["query", "--snapshot", s(&bad_snap), "--restrictions", "[]"])), 1);

    // the parent of the output path is a regular file
    let blocked = snap.join("out.snap");
    assert_eq!(code(&cohort(&["demo", "--patients", "1", "--out", s(&blocked)])), 2);

    assert_eq!(code(&cohort(&["--help"])), 0);
    assert_eq!(code(&cohort(&["query", "--help"])), 0);
}

#[test]
fn index_builds_the_snapshot_of_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pats = generate(&DemoConfig::small(15, 4));
    let mut f = fs::File::create(dir.path().join("patients.jsonl")).unwrap();
    for p in &pats {
        writeln!(f, "{}", serde_json::to_string(p).unwrap()).unwrap();
    }
    writeln!(f, "{{not json").unwrap();
    drop(f);
    let manifest = dir.path().join("ingest.toml");
    fs::write(&manifest, "patients_path = \"patients.jsonl\"\n").unwrap();
    let out = dir.path().join("out.snap");
    let errors = dir.path().join("errors.jsonl");
    let o = cohort(&["index", "--manifest", s(&manifest), "--out", s(&out), "--errors", s(&errors)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (schema, got) = read_snapshot(&out).unwrap();
    assert_eq!(schema, Schema::default());
    let mut want = pats.clone();
    want.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut got_sorted = got.clone();
    got_sorted.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    assert_eq!(got_sorted, want);
    let report = fs::read_to_string(&errors).unwrap();
    assert_eq!(report.lines().count(), 1);
    assert!(report.contains("\"line\":16"), "{report}");

    // rebuilding is byte-identical
    let out2 = dir.path().join("out2.snap");
    assert_eq!(code(&cohort(&["index", "--manifest", s(&manifest), "--out", s(&out2)])), 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());

    fs::write(&manifest, "mode = \"update\"\npatients_path = \"patients.jsonl\"\n").unwrap();
    assert_eq!(code(&cohort(&["index", "--manifest", s(&manifest), "--out", s(&out)])), 1);
}

#[test]
fn annotate_writes_one_line_per_file_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    let letters = dir.path().join("letters");
    fs::create_dir(&letters).unwrap();
    let texts = [
        ("b.txt", "Kein Hinweis auf Vorhofflimmern."),
        ("a.txt", "Bekannte arterielle Hypertonie, Vorhofflimmern."),
        ("c.txt", ""),
    ];
    for (name, text) in texts {
        fs::write(letters.join(name), text).unwrap();
    }
    fs::write(letters.join("skip.md"), "Vorhofflimmern").unwrap();
    let out = dir.path().join("out.jsonl");
    let o = cohort(&["annotate", "--in", s(&letters), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read(&out).unwrap();
    let rows: Vec<Value> = first.split(|&b| b == b'\n').filter(|l| !l.is_empty()).map(|l| serde_json::from_slice(l).unwrap()).collect();
    let names: Vec<&str> = rows.iter().map(|r| r["file"].as_str().unwrap()).collect();
    assert_eq!(names, ["a.txt", "b.txt", "c.txt"]);
    let cfg = PipelineConfig::builtin();
    for row in &rows {
        let text = texts.iter().find(|t| t.0 == row["file"]).unwrap().1;
        assert_eq!(row["annotations"], serde_json::to_value(annotate(text, &cfg)).unwrap());
    }
    assert!(rows[1]["annotations"].as_array().unwrap().iter().any(|a| a["negated"] == json!(true)));

    let o = cohort(&["annotate", "--in", s(&letters), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let snap = demo_snapshot(dir.path(), 5, 2);
    let mut child = Command::new(env!("CARGO_BIN_EXE_cohort"))
        .args(["serve", "--port", "0", "--snapshot", s(&snap), "--data-dir", s(&dir.path().join("data"))])
        .env("RUST_LOG", "warn")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();

    let mut conn = TcpStream::connect(&addr).unwrap();
    write!(conn, "GET /api/health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["patients"], json!(5));
}
