use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rescov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_json(p: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn pool_then_select_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let pool = path(dir.path(), "pool.json");
    assert!(rescov(&["pool", "gen", "--seed", "3", "--out", &pool])
        .status
        .success());
    assert_eq!(read_json(&pool).as_array().unwrap().len(), 50);

    let out = rescov(&["select", "--pool", &pool]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sel: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(sel["cardinality"].as_u64().unwrap() > 0);
    assert_eq!(sel["certified"], true);
}

#[test]
fn infeasible_selection_exits_two_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let pool = path(dir.path(), "pool.json");
    assert!(rescov(&["pool", "gen", "--out", &pool]).status.success());
    let out = rescov(&["select", "--pool", &pool, "--beta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"], "Infeasible");
    assert_eq!(diag["constraints"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.ndjson"), path(dir.path(), "b.ndjson"));
    assert!(rescov(&["simulate", "--seed", "4", "--out", &a])
        .status
        .success());
    assert!(rescov(&["simulate", "--seed", "4", "--out", &b])
        .status
        .success());
    let (ta, tb) = (
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap(),
    );
    assert_eq!(ta, tb);
    assert!(ta.lines().count() > 3);
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    let out = rescov(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        &path(dir.path(), "x.ndjson"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_csv_has_one_row_per_l_trial_and_metric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, r#"{"seed": 2, "domain": {"min": {"x": 0, "y": 0}, "max": {"x": 20, "y": 20}}, "pool_size": 30}"#).unwrap();
    let out = path(dir.path(), "t.csv");
    let run = rescov(&[
        "experiment",
        "robots-vs-L",
        "--config",
        &cfg,
        "--Ls",
        "2,5",
        "--trials",
        "3",
        "--jobs",
        "2",
        "--out",
        &out,
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("L,trial,metric,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    for metric in ["requested", "unsatisfied", "requested_gamma0"] {
        assert_eq!(rows.iter().filter(|r| r[2] == metric).count(), 2 * 3);
    }
    assert_eq!(rows.len(), 2 * 3 * 3);

    let again = path(dir.path(), "u.csv");
    rescov(&[
        "experiment",
        "robots-vs-L",
        "--config",
        &cfg,
        "--Ls",
        "2,5",
        "--trials",
        "3",
        "--out",
        &again,
    ]);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
}

#[test]
fn clique_cover_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let pos = path(dir.path(), "pos.csv");
    std::fs::write(&pos, "id,x,y\n1,0,0\n2,1,0\n3,0.5,0.8\n4,5,5\n5,5.5,5\n").unwrap();
    let out = path(dir.path(), "cover.json");
    let run = rescov(&[
        "clique-cover",
        "--positions",
        &pos,
        "--range",
        "1.5",
        "--out",
        &out,
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let cover = read_json(&out);
    assert_eq!(cover["blocks"], serde_json::json!([[1, 2, 3], [4, 5]]));
    assert_eq!(cover["messages"]["neighborhoods"], 8);
}
