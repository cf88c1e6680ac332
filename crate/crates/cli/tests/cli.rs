use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn nsbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsbsim")).args(args).env_remove("NSBSIM_SEED").output().unwrap()
}

fn write_cfg(dir: &Path, name: &str, cfg: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn parties(honest: u32, corrupt: u32) -> Value {
    let v: Vec<Value> =
        (1..=honest + corrupt).map(|i| json!({"id": i, "honest": i <= honest, "tree": "indexed"})).collect();
    Value::Array(v)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 100, "parties": parties(3, 0),
        "lottery": {"type": "bernoulli", "q_default": 0.1}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nsbsim(&["run", &path, "--out", out.to_str().unwrap(), "--dot"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.jsonl", "blocks.jsonl", "tree.dot", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    for lens in report["summary"]["chain_lengths"].as_object().unwrap().values() {
        let lens: Vec<u64> = lens.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
    }
    let dot = std::fs::read_to_string(a.join("tree.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    let lines = std::fs::read_to_string(a.join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 101 * 3);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["best_chain_hashes"].as_array().unwrap().len(), 1);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 60, "parties": parties(3, 0),
        "lottery": {"type": "bernoulli", "q_default": 0.2}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let run = |seed: Option<&str>, out: &str| {
        let out = dir.path().join(out);
        let mut c = Command::new(env!("CARGO_BIN_EXE_nsbsim"));
        c.args(["run", &path, "--out", out.to_str().unwrap()]).env_remove("NSBSIM_SEED");
        if let Some(s) = seed {
            c.env("NSBSIM_SEED", s);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.join("trace.jsonl")).unwrap()
    };
    let (plain, one, one_again) = (run(None, "p"), run(Some("1"), "x"), run(Some("1"), "y"));
    assert_eq!(one, one_again);
    assert_ne!(plain, one);
}

#[test]
fn honest_supermajority_scripted_scenario_passes_all_checks() {
    let dir = tempfile::tempdir().unwrap();
    let wins: Vec<Value> = (1..=60u64).filter(|s| s % 3 != 0).map(|s| json!([1 + s % 4, s])).collect();
    let cfg = json!({
        "schema": 1, "horizon": 60, "parties": parties(4, 1),
        "lottery": {"type": "scripted", "wins": wins},
        "adversary": {"strategy": "equivocate"},
        "checks": {"stride": 3, "quality_stride": 5, "k": [3, 6]}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let out = dir.path().join("o");
    let o = nsbsim(&["check", &path, "--checks", "all", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().len() >= 8);
}

#[test]
fn forging_exits_nonzero_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 30, "parties": parties(3, 1),
        "lottery": {"type": "bernoulli", "q_default": 0.3},
        "adversary": {"strategy": "forge"}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let o = nsbsim(&["check", &path, "--checks", "monitors,cp"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("\"kind\":\"forging\""), "{s}");
    assert!(s.contains("precondition_failed"), "{s}");
}

#[test]
fn narrow_hash_flood_reports_a_collision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 300, "hash_width": 12, "parties": parties(10, 0),
        "lottery": {"type": "bernoulli", "q_default": 0.5}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let o = nsbsim(&["check", &path, "--checks", "collision"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("\"first\"") && s.contains("\"second\""), "{s}");
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 10,
        "parties": [{"id": 2, "honest": true, "tree": "indexed"}, {"id": 2, "honest": true, "tree": "indexed"}],
        "lottery": {"type": "bernoulli", "q": {"2": 1.5}}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let o = nsbsim(&["run", &path, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("duplicate party id 2") && err.contains("1.5"), "{err}");
}

#[test]
fn bounds_table_matches_the_model() {
    let o = nsbsim(&["bounds", "--q", "1=0.1,2=0.1,3=0.1", "--corrupt", "3", "--k-range", "10:30", "--json"]);
    assert!(o.status.success());
    let t: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((t["probs"]["p_ls"].as_f64().unwrap() - 0.19).abs() < 1e-12);
    assert!((t["probs"]["p_ss"].as_f64().unwrap() - 0.18).abs() < 1e-12);
    assert!((t["probs"]["p_as"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(t["cp_epsilon"]["satisfied"], false);
    assert!(!t["warnings"].as_array().unwrap().is_empty());

    let o = nsbsim(&[
        "bounds",
        "--q",
        "1=0.3,2=0.3,3=0.05",
        "--corrupt",
        "3",
        "--delta",
        "0",
        "--k-range",
        "5:50",
        "--json",
    ]);
    let t: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(t["rows"].as_array().unwrap().iter().all(|r| r["cp_bound"] == 1.0));

    let o = nsbsim(&[
        "bounds",
        "--q",
        "1=0.4,2=0.4,3=0.02",
        "--corrupt",
        "3",
        "--delta",
        "0.5",
        "--delta-prime",
        "0.9",
        "--k-range",
        "1000:5000",
        "--k-step",
        "1000",
        "--sl-now",
        "20000",
        "--json",
    ]);
    let t: Value = serde_json::from_slice(&o.stdout).unwrap();
    let cp: Vec<f64> = t["rows"].as_array().unwrap().iter().map(|r| r["cp_bound"].as_f64().unwrap()).collect();
    assert!(cp.windows(2).all(|w| w[1] < w[0]), "{cp:?}");
}

#[test]
fn conformance_flags_the_broken_tree() {
    assert!(nsbsim(&["conformance", "--impl", "indexed", "--n", "120", "--seeds", "3"]).status.success());
    assert!(nsbsim(&["conformance", "--impl", "reference", "--against", "indexed", "--n", "80"]).status.success());
    let o = nsbsim(&["conformance", "--impl", "broken", "--n", "200"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn batch_writes_one_report_per_seed_and_an_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema": 1, "horizon": 80, "parties": parties(4, 1),
        "lottery": {"type": "bernoulli", "q_default": 0.1},
        "adversary": {"strategy": "withhold"}
    });
    let path = write_cfg(dir.path(), "cfg.json", &cfg);
    let out = dir.path().join("b");
    let o = nsbsim(&["batch", &path, "--seeds", "3:8", "--checks", "growth,cp", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let seeds = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("seed-"))
        .count();
    assert_eq!(seeds, 5);
    let agg: Value = serde_json::from_slice(&std::fs::read(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["growth"]["holds"], 5);
    assert_eq!(agg["cp-all"]["violated"], 0);
}
