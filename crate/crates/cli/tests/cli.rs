use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const XAIKG: &str = env!("CARGO_BIN_EXE_xaikg");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(XAIKG).current_dir(dir).args(args).output().unwrap()
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn pipeline(dir: &Path) {
    ok_json(dir, &["demo-data", "--out", "."]);
    let counts = ok_json(
        dir,
        &["--graph", "g.jsonl", "ingest", "--shipments", "shipments.csv", "--forecasts", "forecasts.json", "--relevance", "relevance.jsonl"],
    );
    assert_eq!(counts, serde_json::json!({"nodes_added": 228, "edges_added": 439}));
    assert_eq!(ok_json(dir, &["--graph", "g.jsonl", "explain"])["created"], 6);
    assert_eq!(ok_json(dir, &["--graph", "g.jsonl", "options"])["created"], 8);
}

#[test]
fn bundled_fixture_is_canonical_and_has_tpl_8() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/path3.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let m = ok_json(dir.path(), &["--graph", fixture.to_str().unwrap(), "metrics"]);
    assert_eq!((m["tpl"].as_u64(), m["mpl"].as_u64(), m["path_count"].as_u64()), (Some(8), Some(2), Some(2)));
    assert_eq!(m["sampled"], false);
    assert!(m.get("seed").is_none());

    let out = run(dir.path(), &["--graph", fixture.to_str().unwrap(), "export", "--out", "copy.jsonl"]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(dir.path().join("copy.jsonl")).unwrap(), fs::read(&fixture).unwrap());

    let s = ok_json(dir.path(), &["--graph", fixture.to_str().unwrap(), "metrics", "--sample", "0.34", "--seed", "0"]);
    assert_eq!((s["sampled"].as_bool(), s["seed"].as_u64()), (Some(true), Some(0)));
}

#[test]
fn bad_csv_row_exits_2_and_leaves_graph_untouched() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let before = fs::read(dir.path().join("g.jsonl")).unwrap();
    fs::write(dir.path().join("bad.csv"), "date,material_id,client_id,quantity\n2020-01-02,M1,C1,10\n2020-01-03,M1,C1,-3\n").unwrap();
    let out = run(dir.path(), &["--graph", "g.jsonl", "ingest", "--shipments", "bad.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read(dir.path().join("g.jsonl")).unwrap(), before);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let d = dir.path();

    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "frobnicate"])), 1);
    assert_eq!(code(&run(d, &["metrics"])), 1);
    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "ingest"])), 1);
    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "metrics", "--seed", "3"])), 1);
    assert_eq!(code(&run(d, &["--help"])), 0);

    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "metrics", "--sample", "1.5"])), 2);
    assert_eq!(code(&run(d, &["--graph", "missing.jsonl", "options", "--rules", "nope.json"])), 2);
    assert!(!d.join("missing.jsonl").exists(), "nothing written on failure");
    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "synth-feedback", "--coverage-option", "2"])), 2);

    let out = run(d, &["--graph", "g.jsonl", "feedback", "--user", "ana", "--target", "n186", "--rating", "4", "--date", "2020-02-01"]);
    assert_eq!(code(&out), 2, "UseCase is not a feedback target");
    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "show", "n99999"])), 4);
    assert_eq!(code(&run(d, &["--graph", "g.jsonl", "ingest", "--relevance", "relevance.jsonl"])), 4);

    // a schema without Shipment turns ingest into a schema violation
    let schema: Value = serde_json::from_slice(&run(d, &["schema"]).stdout).unwrap();
    let mut reduced = schema.clone();
    reduced["node_kinds"].as_array_mut().unwrap().retain(|k| k["name"] != "Shipment");
    for e in reduced["edge_kinds"].as_array_mut().unwrap() {
        e["endpoints"].as_array_mut().unwrap().retain(|p| p[0] != "Shipment");
    }
    fs::write(d.join("reduced.json"), reduced.to_string()).unwrap();
    let out = run(d, &["--graph", "fresh.jsonl", "--schema", "reduced.json", "ingest", "--shipments", "shipments.csv"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("fresh.jsonl").exists());
}

#[test]
fn feedback_and_actions_round_trip_through_show() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let forecast = ok_json(d, &["--graph", "g.jsonl", "show", "n188"]);
    assert_eq!(forecast["forecast_id"], "f1");
    let option = forecast["options"][0]["node_id"].as_str().unwrap().to_string();

    let fb = ok_json(d, &["--graph", "g.jsonl", "feedback", "--user", "ana", "--target", "n188", "--rating", "5", "--comment", "spot on", "--date", "2020-02-01"]);
    assert!(fb["feedback_id"].is_string());
    let act = ok_json(d, &["--graph", "g.jsonl", "action", "--user", "ana", "--option", &option, "--kind", "accepted", "--date", "2020-02-01"]);
    assert!(act["action_id"].is_string());

    let after = ok_json(d, &["--graph", "g.jsonl", "show", "n188"]);
    assert_eq!(after["feedback"]["count"], 1);
    assert_eq!(after["feedback"]["mean_rating"], 5.0);
}

#[test]
fn schema_command_prints_the_builtin_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["schema"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = xaikg_core::schema::load_schema(&text).unwrap();
    assert_eq!(parsed, xaikg_core::schema::builtin_xaikg_schema());
}
