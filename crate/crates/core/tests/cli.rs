mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use vl_core::cli::{run, EXIT_API, EXIT_OK, EXIT_USAGE};
use vl_core::config::Settings;

const FIXTURES: &str = "\
{\"id\":\"e1\",\"title\":\"chair\",\"vector\":[1,0],\"metadata\":{\"tags\":\"oak\"}}
{\"id\":\"e2\",\"title\":\"lamp\",\"vector\":[0,1]}
{\"id\":\"mid\",\"title\":\"stool\",\"vector\":[1,1]}
";

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn vl(args: &[&str]) -> Out {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("vl").chain(args.iter().copied()), &mut o, &mut e);
    Out { code, stdout: String::from_utf8(o).unwrap(), stderr: String::from_utf8(e).unwrap() }
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(dimension: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("vl.toml"), format!("dimension = {dimension}\n")).unwrap();
        std::fs::write(dir.path().join("fixtures.jsonl"), FIXTURES).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_owned()
    }

    /// Runs `vl --config vl.toml --local snap.jsonl ARGS`.
    fn local(&self, args: &[&str]) -> Out {
        let (config, snap) = (self.path("vl.toml"), self.path("snap.jsonl"));
        let mut all = vec!["--config", &config, "--local", &snap];
        all.extend_from_slice(args);
        vl(&all)
    }

    fn ingest(&self) {
        let out = self.local(&["ingest", &self.path("fixtures.jsonl")]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
        assert_eq!(out.stdout, "ingested 3, skipped 0\n");
    }
}

#[test]
fn ingest_then_search_fixture() {
    let ws = Workspace::new(2);
    ws.ingest();
    let out = ws.local(&["search", "--term", "fixture:1,0:1.0", "-k", "1"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let rows: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].ends_with("  e1"), "{}", out.stdout);
    assert!(rows[1].contains("1.000000"));
}

#[test]
fn refined_search_prints_trace() {
    let ws = Workspace::new(16);
    let out = ws.local(&[
        "search",
        "--term",
        "dining chair:1.0",
        "--term",
        "scandinavian design:0.6",
        "--less",
        "upholstery:1.1",
        "--debug",
    ]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("+1.000  dining chair"));
    assert!(out.stdout.contains("+0.600  scandinavian design"));
    assert!(out.stdout.contains("-1.100  upholstery"));
    assert!(out.stdout.contains("no results"));
}

#[test]
fn walk_formats() {
    let ws = Workspace::new(2);
    ws.ingest();
    let single = ws.local(&["walk", "--start", "e1", "--layers", "1"]);
    assert_eq!((single.code, single.stdout.as_str()), (EXIT_OK, "e1\n"));

    let tree = ws.local(&["walk", "--start", "e1", "--layers", "2", "--children", "2", "--neighbours", "2"]);
    let lines: Vec<&str> = tree.stdout.lines().collect();
    assert_eq!(lines[0], "e1");
    assert!(lines[1].starts_with("├── ") && lines[2].starts_with("└── "), "{}", tree.stdout);

    let flat = ws.local(&["walk", "--start", "e1", "--layers", "2", "--children", "2", "--neighbours", "2", "--format", "flat"]);
    let mut ids: Vec<&str> = flat.stdout.lines().collect();
    ids.sort();
    assert_eq!(ids, ["e2", "mid"]);

    let json = ws.local(&["walk", "--query", "fixture:0,1", "--layers", "2", "--format", "json", "--children", "1", "--neighbours", "1"]);
    let v: serde_json::Value = serde_json::from_str(&json.stdout).unwrap();
    assert_eq!(v["tree"]["children"][0]["doc_id"], "e2");
    assert_eq!(v["tree"]["vector"], serde_json::json!([0.0, 1.0]));
}

#[test]
fn snapshot_restore_is_bit_identical() {
    let ws = Workspace::new(2);
    ws.ingest();
    let (a, b) = (ws.path("a.jsonl"), ws.path("b.jsonl"));
    assert_eq!(ws.local(&["snapshot", &a]).stdout, format!("wrote 3 documents to {a}\n"));
    assert_eq!(ws.local(&["delete", "mid"]).stdout, "deleted mid\n");
    assert_eq!(ws.local(&["delete", "mid"]).stdout, "absent mid\n");
    assert_eq!(ws.local(&["restore", &a]).stdout, "restored 3 documents\n");
    ws.local(&["snapshot", &b]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(ws.path("snap.jsonl")).unwrap());
}

#[test]
fn get_recommend_templates_health() {
    let ws = Workspace::new(2);
    ws.ingest();
    let got = ws.local(&["get", "e1"]);
    assert_eq!(got.stdout, "e1  chair\n  tags: oak\n");
    let rec = ws.local(&["recommend", "e1", "e2", "-k", "1"]);
    assert!(rec.stdout.lines().nth(1).unwrap().ends_with("mid"));
    assert!(ws.local(&["templates"]).stdout.contains("monochrome"));
    assert_eq!(ws.local(&["health"]).stdout, "ok dimension=2 documents=3\n");
    let missing = ws.local(&["get", "zz"]);
    assert_eq!(missing.code, EXIT_API);
    assert!(missing.stderr.starts_with("error: not_found"));
}

#[test]
fn usage_errors() {
    let ws = Workspace::new(2);
    let bad = ws.local(&["search", "--term", "chair"]);
    assert_eq!(bad.code, EXIT_USAGE);
    assert!(bad.stderr.contains("dining chair:1.0"));
    assert_eq!(ws.local(&["search", "--term", "a:1", "--filter", "novalue"]).code, EXIT_USAGE);
    assert_eq!(vl(&["walk"]).code, EXIT_USAGE);
    assert_eq!(vl(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(vl(&["--help"]).code, EXIT_OK);
}

#[test]
fn json_output_matches_service_bytes() {
    let ws = Workspace::new(2);
    ws.ingest();
    let settings = Settings { dimension: 2, ..Default::default() };
    let engine = settings.build_engine().unwrap();
    engine.index().restore_snapshot(Path::new(&ws.path("snap.jsonl"))).unwrap();
    let base = common::spawn(vl_core::service::router(Arc::new(engine)));

    let cases: Vec<Vec<&str>> = vec![
        vec!["search", "--term", "fixture:1,0.2:1.0", "--less", "fixture:0,1:0.3", "-k", "3", "--debug"],
        vec!["search", "--term", "fixture:1,1:1.0", "--filter", "tags=oak"],
        vec!["recommend", "e1", "mid"],
        vec!["walk", "--start", "mid", "--layers", "2", "--children", "2", "--neighbours", "2", "--seed", "4"],
        vec!["get", "e2"],
        vec!["templates"],
        vec!["health"],
    ];
    for case in cases {
        let mut local_args = vec!["--json"];
        local_args.extend_from_slice(&case);
        let local = ws.local(&local_args);
        let mut remote_args = vec!["--endpoint", &base, "--json"];
        remote_args.extend_from_slice(&case);
        let remote = vl(&remote_args);
        assert_eq!(local.code, EXIT_OK, "{case:?}: {}", local.stderr);
        assert_eq!(remote.code, EXIT_OK, "{case:?}: {}", remote.stderr);
        assert_eq!(local.stdout, remote.stdout, "{case:?}");
    }

    let remote_missing = vl(&["--endpoint", &base, "get", "zz"]);
    assert_eq!(remote_missing.code, EXIT_API);
    assert!(remote_missing.stderr.starts_with("error: not_found"));

    let out = vl(&["--endpoint", &base, "ingest", &ws.path("fixtures.jsonl")]);
    assert_eq!(out.stdout, "ingested 3, skipped 0\n");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_vl");
    let ws = Workspace::new(2);
    ws.ingest();
    let ok = Command::new(bin)
        .args(["--config", &ws.path("vl.toml"), "--local", &ws.path("snap.jsonl"), "search", "--term", "fixture:0,1:1", "-k", "1"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("e2"));
    let down = Command::new(bin).args(["health"]).env("VL_ENDPOINT", "http://127.0.0.1:9").output().unwrap();
    assert_eq!(down.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&down.stderr).contains("http://127.0.0.1:9"));
    let usage = Command::new(bin).args(["search"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
