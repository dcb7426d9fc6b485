use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn lsvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsvi")).args(args).output().expect("binary runs")
}

fn tabular_config(episodes: usize, scheduler: Value) -> Value {
    // Two states, two actions, H = 2.
    let p = json!([[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.3, 0.7]]]);
    let r = json!([[0.1, 0.6], [0.4, 0.2]]);
    json!({
        "schema_version": 1,
        "spec": {"source": "tabular", "transitions": [p.clone(), p], "rewards": [r.clone(), r], "horizon": 2},
        "episodes": episodes,
        "scheduler": scheduler,
        "seed": 3
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_run_writes_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &tabular_config(100, json!({"kind": "full"})));
    let out = dir.path().join("out");
    let res = lsvi(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "episode,b_k,inst_regret,cum_regret,n_switches_so_far");
    assert_eq!(lines.count(), 100);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["scheduler"], "full");
    assert_eq!(summary["n_refits"], 100);
    assert!(summary["beta"].as_f64().unwrap() > 0.0);
}

#[test]
fn det_switch_budget_flag_bounds_switches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &tabular_config(300, json!({"kind": "full"})));
    let out = dir.path().join("out");
    let res = lsvi(&[
        "run", "--config", &cfg, "--out", out.to_str().unwrap(), "--scheduler", "det_switch", "--budget", "8",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["scheduler"], "det_switch");
    assert!(summary["n_switches"].as_u64().unwrap() <= 8);
    assert!(summary["switch_bound"].as_f64().unwrap() <= 8.0 + 1e-9);
}

#[test]
fn zero_delta_is_a_field_level_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tabular_config(10, json!({"kind": "full"}));
    v["delta"] = json!(0.0);
    let cfg = write(dir.path(), "bad.json", &v);
    let res = lsvi(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("delta"));
    assert!(!dir.path().join("o").join("run.csv").exists());
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &tabular_config(10, json!({"kind": "batch", "budget": 5})));
    let out = dir.path().join("out");
    let res = lsvi(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--episodes", "20", "--budget", "4"]);
    assert_eq!(res.status.code(), Some(0));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["batch_count"], 4);
    assert_eq!(summary["grid"], json!([1, 6, 11, 16]));
    let artifact = read_json(&out.join("run.json"));
    assert_eq!(artifact["config"]["episodes"], 20);
}

#[test]
fn eta_and_budget_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &tabular_config(10, json!({"kind": "full"})));
    let res = lsvi(&[
        "run", "--config", &cfg, "--out", "unused", "--scheduler", "det_switch", "--budget", "3", "--eta", "2.0",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn diagnose_routes_checks_by_scheduler() {
    let dir = tempfile::tempdir().unwrap();
    for (name, sched, present, skipped) in [
        ("full", json!({"kind": "full"}), "det_bound", "bad_indices"),
        ("ds", json!({"kind": "det_switch", "budget": 6}), "bonus_ratio", "bad_indices"),
        ("batch", json!({"kind": "batch", "budget": 6}), "bad_indices", "bonus_ratio"),
    ] {
        let cfg = write(dir.path(), &format!("{name}.json"), &tabular_config(60, sched));
        let out = dir.path().join(name);
        assert_eq!(lsvi(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
        let res = lsvi(&["diagnose", "--config", out.join("run.json").to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        let diag = read_json(&out.join("diagnostics.json"));
        let checks = diag["checks"].as_array().unwrap();
        let find = |n: &str| checks.iter().find(|c| c["name"] == n).unwrap().clone();
        assert_eq!(find(present)["status"], "pass", "{name}");
        assert_eq!(find(skipped)["status"], "not_applicable", "{name}");
        assert_eq!(find("regret_replay")["status"], "pass", "{name}");
        for c in checks {
            for key in ["name", "pass", "worst_margin", "n_violations"] {
                assert!(c.get(key).is_some());
            }
        }
    }
}

#[test]
fn truncated_artifact_fails_closed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &tabular_config(20, json!({"kind": "full"})));
    let out = dir.path().join("out");
    assert_eq!(lsvi(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));

    let mut artifact = read_json(&out.join("run.json"));
    artifact["report"]["traces"].as_array_mut().unwrap().pop();
    let bad_dir = dir.path().join("bad");
    fs::create_dir_all(&bad_dir).unwrap();
    let bad = write(&bad_dir, "run.json", &artifact);
    let res = lsvi(&["diagnose", "--config", &bad]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!bad_dir.join("diagnostics.json").exists());

    let text = fs::read_to_string(out.join("run.json")).unwrap();
    let cut = dir.path().join("cut.json");
    fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert_eq!(lsvi(&["diagnose", "--config", cut.to_str().unwrap()]).status.code(), Some(2));

    let mut no_traces = read_json(&out.join("run.json"));
    no_traces["report"].as_object_mut().unwrap().remove("traces");
    let nt = write(dir.path(), "nt.json", &no_traces);
    assert_eq!(lsvi(&["diagnose", "--config", &nt]).status.code(), Some(2));
}

fn suite(out: &Path, budgets: Value, seeds: Value) -> Value {
    json!({
        "schema_version": 1,
        "base": {
            "schema_version": 1,
            "spec": {"source": "random", "dim": 3, "n_states": 4, "n_actions": 2, "horizon": 2, "seed": 11},
            "episodes": 64,
            "scheduler": {"kind": "batch", "budget": 1},
            "bonus_scale": 0.05
        },
        "schedulers": ["batch"],
        "budgets": budgets,
        "seeds": seeds,
        "output_dir": out
    })
}

#[test]
fn sweep_has_one_row_per_budget_and_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let budgets = json!([1, 2, 4, 8, 16, 32, 64]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let s1 = write(dir.path(), "s1.json", &suite(&a, budgets.clone(), json!([0, 1, 2])));
    let s2 = write(dir.path(), "s2.json", &suite(&b, budgets, json!([2, 5])));
    assert_eq!(lsvi(&["sweep", "--config", &s1]).status.code(), Some(0));
    assert_eq!(lsvi(&["sweep", "--config", &s2]).status.code(), Some(0));

    let read = |p: &Path| -> Vec<csv::StringRecord> {
        csv::Reader::from_path(p.join("sweep.csv")).unwrap().records().map(Result::unwrap).collect()
    };
    let (ra, rb) = (read(&a), read(&b));
    assert_eq!(ra.len(), 21);
    assert_eq!(rb.len(), 14);
    let header = csv::Reader::from_path(a.join("sweep.csv")).unwrap().headers().unwrap().clone();
    for col in ["scheduler", "budget", "seed", "regret", "n_switches", "status"] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    // Rows are (scheduler, budget, seed, ...): seed 2 appears in both sweeps.
    for x in ra.iter().filter(|r| &r[2] == "2") {
        let y = rb.iter().find(|r| r[1] == x[1] && &r[2] == "2").unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn sweep_over_the_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = suite(&dir.path().join("o"), json!([1, 2, 3]), json!([0, 1, 2, 3]));
    s["max_runs"] = json!(10);
    let path = write(dir.path(), "s.json", &s);
    assert_eq!(lsvi(&["sweep", "--config", &path]).status.code(), Some(2));
}

#[test]
fn config_round_trips() {
    use adaptive_lsvi_cli::{RunFile, SuiteFile};
    let v = tabular_config(10, json!({"kind": "det_switch", "eta": 2.5}));
    let parsed: RunFile = serde_json::from_value(v).unwrap();
    let again: RunFile = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, again);
    let s: SuiteFile = serde_json::from_value(suite(Path::new("x"), json!([1]), json!([0]))).unwrap();
    let s2: SuiteFile = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(s, s2);
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tabular_config(10, json!({"kind": "full"}));
    v["episdoes"] = json!(3);
    let cfg = write(dir.path(), "typo.json", &v);
    let res = lsvi(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
