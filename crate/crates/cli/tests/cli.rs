use std::path::Path;
use std::process::{Command, Output};

use xattr_cli::{EXIT_DATA, EXIT_METHOD, EXIT_OK, EXIT_USAGE, SEED_ENV};

fn xattr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xattr"))
        .args(args)
        .env_remove(SEED_ENV)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, kind: &str, rows: &str) -> std::path::PathBuf {
    let out = dir.join(kind);
    let o = xattr(&["--out", s(&out), "gen-data", "--kind", kind, "--rows", rows]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors() {
    assert_eq!(code(&xattr(&[])), EXIT_USAGE);
    assert_eq!(code(&xattr(&["shap", "--bogus"])), EXIT_USAGE);
    assert_eq!(code(&xattr(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&xattr(&["--help"])), EXIT_OK);
}

#[test]
fn missing_inputs_are_data_errors() {
    let t = tempfile::tempdir().unwrap();
    let o = xattr(&["--out", s(t.path()), "shap", "--model", "/nonexistent/model.txt", "--data", "/nonexistent/d.csv"]);
    assert_eq!(code(&o), EXIT_DATA);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent"));
}

#[test]
fn failed_search_still_writes_a_report() {
    let t = tempfile::tempdir().unwrap();
    let g = gen(t.path(), "credit", "300");
    let net = xattr::models::io::load_model(g.join("model.txt")).unwrap();
    let data = xattr::models::TabularDataset::read_csv(g.join("data.csv")).unwrap();
    let row = (0..data.n_rows()).find(|&i| net.predict(&data.rows[i]).unwrap()[0] < 0.5).unwrap();
    let out = t.path().join("cf");
    let row = row.to_string();
    let o = xattr(&[
        "--out", s(&out), "cf", "--model", s(&g.join("model.txt")), "--data", s(&g.join("data.csv")),
        "--row", &row, "--desired", "1", "--max-iters", "0",
    ]);
    assert_eq!(code(&o), EXIT_METHOD);
    let valid = &report(&out)["body"]["valid"];
    assert!(valid.as_array().unwrap().iter().all(|v| v == false), "{valid}");
}

#[test]
fn seed_environment_overrides_the_flag() {
    let t = tempfile::tempdir().unwrap();
    let g = gen(t.path(), "credit", "200");
    let out = t.path().join("shap");
    let o = Command::new(env!("CARGO_BIN_EXE_xattr"))
        .args(["--out", s(&out), "shap", "--model", s(&g.join("model.txt")), "--data", s(&g.join("data.csv"))])
        .args(["--background", "20", "--permutations", "20", "--seed", "3"])
        .env(SEED_ENV, "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(report(&out)["seed"], 7);
    let config: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 7);
    assert_eq!(config["command"], "shap");
}

#[test]
fn seed_defaults_to_zero() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("g");
    assert_eq!(code(&xattr(&["--out", s(&out), "gen-data", "--kind", "credit", "--rows", "50"])), EXIT_OK);
    assert_eq!(report(&out)["seed"], 0);
}

#[test]
fn tautology_query_is_fully_true() {
    let t = tempfile::tempdir().unwrap();
    let g = gen(t.path(), "recidivism", "300");
    let out = t.path().join("q");
    let o = xattr(&[
        "--out", s(&out), "ltn-query", "--model", s(&g.join("model.txt")), "--data", s(&g.join("data.csv")),
        "--formula", "forall x: implies(label(x), label(x))",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let d = report(&out)["body"]["degree"].as_f64().unwrap();
    assert!((d - 1.0).abs() < 1e-9, "{d}");
}

fn repl(dir: &Path, g: &Path, script: &str) -> (Output, std::path::PathBuf) {
    let path = dir.join("script.txt");
    std::fs::write(&path, script).unwrap();
    let out = dir.join("session");
    let o = xattr(&[
        "--out", s(&out), "repl", "--model", s(&g.join("model.txt")), "--data", s(&g.join("data.csv")),
        "--script", s(&path), "--lr", "0.005",
    ]);
    (o, out)
}

fn degrees(log: &str) -> Vec<f64> {
    log.lines()
        .filter_map(|l| l.strip_prefix("degree "))
        .map(|d| d.parse().unwrap())
        .collect()
}

#[test]
fn repl_session_raises_the_asserted_degree() {
    let t = tempfile::tempdir().unwrap();
    let g = gen(t.path(), "recidivism", "600");
    let (o, out) = repl(
        t.path(),
        &g,
        "query forall x: implies(label(x), label(x))\n\
         query forall x: equiv(P(x), label(x))\n\
         assert forall x: equiv(P(x), label(x)) @1\n\
         retrain 40\n\
         query forall x: equiv(P(x), label(x))\n\
         save revised.txt\n",
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("session.log")).unwrap();
    let d = degrees(&log);
    assert_eq!(d.len(), 3, "{log}");
    assert!((d[0] - 1.0).abs() < 1e-9);
    assert!(d[2] > d[1], "{log}");
    assert!(out.join("revised.txt").exists());
    assert_eq!(report(&out)["body"]["errors"], 0);
}

#[test]
fn repl_errors_do_not_end_the_session() {
    let t = tempfile::tempdir().unwrap();
    let g = gen(t.path(), "recidivism", "200");
    let (o, out) = repl(
        t.path(),
        &g,
        "query forall x: equiv(P(x), label(x)\n\
         frobnicate\n\
         save ../escape.txt\n\
         save /tmp/escape.txt\n\
         query forall x: implies(label(x), label(x))\n\
         quit\n\
         query never reached\n",
    );
    assert_eq!(code(&o), EXIT_OK);
    let log = std::fs::read_to_string(out.join("session.log")).unwrap();
    assert!(log.contains("parse error at column"), "{log}");
    assert!(log.contains("^"));
    assert!(log.contains("unknown command 'frobnicate'"));
    assert_eq!(log.matches("must be a relative path inside the output directory").count(), 2, "{log}");
    assert!(!t.path().join("escape.txt").exists());
    assert_eq!(degrees(&log).len(), 1);
    assert!(log.ends_with("bye\n"));
    assert!(!log.contains("never reached"));
    let r = report(&out);
    assert_eq!(r["body"]["commands"], 6);
    assert_eq!(r["body"]["errors"], 4);
}

#[test]
fn rerun_reproduces_outputs() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("nle");
    let args = ["nle", "--phi", "cold_cuts=0.4,water=0.01", "--entity", "cold_cuts", "--observed", "5", "--allowed", "2", "--age", "65"];
    let mut full = vec!["--out", s(&out)];
    full.extend(args);
    assert_eq!(code(&xattr(&full)), EXIT_OK);
    let message = std::fs::read_to_string(out.join("message.txt")).unwrap();
    assert!(message.starts_with("This week you consumed too much (5 portions of a maximum 2) cold cuts."));
    let again = t.path().join("again");
    assert_eq!(code(&xattr(&["--out", s(&again), "rerun", "--config", s(&out.join("config.json"))])), EXIT_OK);
    for f in ["config.json", "report.json", "message.txt", "history.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
    assert_eq!(code(&xattr(&["rerun", "--config", s(&t.path().join("missing.json"))])), EXIT_DATA);
}
