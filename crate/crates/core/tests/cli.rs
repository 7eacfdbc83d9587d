use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distembed")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn edge_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).map(str::to_owned).collect()
}

#[test]
fn generate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        ok(&["generate", "swiss_roll", "--n", "150", "--seed", "7", "--out", s(d)]);
    }
    let pa = fs::read_to_string(a.path().join("points.csv")).unwrap();
    assert_eq!(pa.lines().count(), 151);
    assert_eq!(pa, fs::read_to_string(b.path().join("points.csv")).unwrap());
    assert_eq!(fs::read(a.path().join("params.csv")).unwrap(), fs::read(b.path().join("params.csv")).unwrap());
    let meta = json(&a.path().join("meta.json"));
    assert_eq!(meta["config"]["command"]["generate"]["seed"], 7);
}

#[test]
fn flat_torus_writes_short_embedding() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "flat_torus", "--n", "40", "--out", s(d.path())]);
    let short = fs::read_to_string(d.path().join("short.csv")).unwrap();
    assert_eq!(short.lines().next().unwrap(), "y0,y1,y2");
}

#[test]
fn unknown_dataset_is_a_user_error() {
    let out = run(&["generate", "moebius", "--out", "."]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown dataset"));
}

#[test]
fn bad_flag_is_a_user_error() {
    assert_eq!(run(&["embed", "--bogus"]).status.code(), Some(1));
}

#[test]
fn collinear_points_give_two_edges() {
    let d = tempfile::tempdir().unwrap();
    let pts = d.path().join("p.csv");
    fs::write(&pts, "x,y\n0,0\n1,0\n3,0\n").unwrap();
    ok(&["graph", "--points", s(&pts), "--k", "1", "--out", s(d.path())]);
    let mut edges = edge_lines(&d.path().join("graph.txt"));
    edges.sort();
    assert_eq!(edges, vec!["0 1 1", "1 2 2"]);
    let meta = json(&d.path().join("meta.json"));
    assert_eq!(meta["result"]["k"], 1);
}

#[test]
fn graph_meta_records_twonn() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "swiss_roll", "--n", "400", "--out", s(d.path())]);
    ok(&["graph", "--points", s(&d.path().join("points.csv")), "--out", s(d.path())]);
    let meta = json(&d.path().join("meta.json"));
    let dim = meta["result"]["twonn"]["dimension"].as_f64().unwrap();
    assert!((1.5..2.5).contains(&dim), "{dim}");
    assert_eq!(meta["result"]["k"], 8);
}

#[test]
fn k_at_least_n_fails() {
    let d = tempfile::tempdir().unwrap();
    let pts = d.path().join("p.csv");
    fs::write(&pts, "x\n0\n1\n3\n").unwrap();
    let out = run(&["graph", "--points", s(&pts), "--k", "3", "--out", s(d.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn two_vertex_embedding_and_meta() {
    let d = tempfile::tempdir().unwrap();
    let g = d.path().join("g.txt");
    fs::write(&g, "# two\n0 1 3.0\n").unwrap();
    ok(&["embed", "--graph", s(&g), "--dim", "1", "--out", s(d.path())]);
    let csv = fs::read_to_string(d.path().join("embedding.csv")).unwrap();
    let vals: Vec<f64> = csv.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert!(((vals[0] - vals[1]).abs() - 3.0).abs() < 1e-8);
    let meta = json(&d.path().join("meta.json"));
    assert_eq!(meta["config"]["command"]["embed"]["tol"], 1e-7);
    assert_eq!(meta["config"]["command"]["embed"]["dim"], 1);
}

#[test]
fn swiss_roll_objective_column_is_monotone() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "swiss_roll", "--n", "600", "--seed", "2", "--out", s(d.path())]);
    ok(&["graph", "--points", s(&d.path().join("points.csv")), "--out", s(d.path())]);
    ok(&["embed", "--graph", s(&d.path().join("graph.txt")), "--dim", "2", "--maxit", "60", "--out", s(d.path())]);
    let js: Vec<f64> = fs::read_to_string(d.path().join("iterations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["J"].as_f64().unwrap())
        .collect();
    assert!(!js.is_empty());
    for w in js.windows(2) {
        assert!(w[1] <= w[0] + 1e-8 * w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn evaluate_isometric_toy_and_optional_fields() {
    let d = tempfile::tempdir().unwrap();
    let g = d.path().join("g.txt");
    let xs = [0.0, 1.0, 2.5, 3.0, 4.5, 6.0, 7.0, 9.0, 10.0, 12.0, 13.5, 14.0];
    let edges: String = (0..xs.len() - 1).map(|i| format!("{i} {} {}\n", i + 1, xs[i + 1] - xs[i])).collect();
    fs::write(&g, edges).unwrap();
    let emb = d.path().join("e.csv");
    fs::write(&emb, std::iter::once("phi0".to_string()).chain(xs.iter().map(|x| x.to_string())).collect::<Vec<_>>().join("\n")).unwrap();
    let prm = d.path().join("prm.csv");
    fs::write(&prm, std::iter::once("t".to_string()).chain(xs.iter().map(|x| (2.0 * x + 1.0).to_string())).collect::<Vec<_>>().join("\n")).unwrap();
    ok(&["evaluate", "--graph", s(&g), "--embedding", s(&emb), "--params", s(&prm), "--k", "2", "--out", s(d.path())]);
    let r = json(&d.path().join("report.json"));
    assert!(r["lcl_dist"].as_f64().unwrap() < 1e-12);
    assert!(r["glbl_mtrc"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["lcl_f1"], 1.0);
    assert!(r["glbl_prm"].as_f64().unwrap() < 1e-12);
    for key in ["acc", "nmi", "ari"] {
        assert!(r.get(key).is_none(), "{key}");
    }

    let labels = d.path().join("l.csv");
    let names: Vec<&str> = xs.iter().map(|&x| if x < 7.0 { "left" } else { "right" }).collect();
    fs::write(&labels, format!("label\n{}\n", names.join("\n"))).unwrap();
    ok(&["evaluate", "--graph", s(&g), "--embedding", s(&emb), "--labels", s(&labels), "--out", s(d.path())]);
    let r = json(&d.path().join("report.json"));
    assert!(r.get("glbl_prm").is_none());
    assert!(r["acc"].as_f64().unwrap() > 0.8);
    assert!(r.get("nmi").is_some() && r.get("ari").is_some());
}

#[test]
fn evaluate_rejects_mismatched_sizes() {
    let d = tempfile::tempdir().unwrap();
    let g = d.path().join("g.txt");
    fs::write(&g, "0 1 1\n1 2 1\n").unwrap();
    let emb = d.path().join("e.csv");
    fs::write(&emb, "phi0\n0\n1\n").unwrap();
    let out = run(&["evaluate", "--graph", s(&g), "--embedding", s(&emb), "--out", s(d.path())]);
    assert_eq!(out.status.code(), Some(1));
}
