mod common;

use common::*;
use std::net::TcpListener;
use teamplan::adapt::RunLog;
use teamplan::domain::TaskId;
use teamplan::motion::{DiffusionPolicy, MotionPolicy};
use teamplan_cli::Config;

#[test]
fn missing_world_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(&dir.path().join("p.json"));
    cfg["world"] = serde_json::json!(dir.path().join("nowhere.json"));
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run(&["train-policy", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
    assert!(!out.join("policy.json").exists());
}

#[test]
fn missing_artifact_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(&dir.path().join("absent.json")));
    let out = dir.path().join("out");
    for cmd in ["run", "ablation", "serve"] {
        let o = run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--force"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}: {}", stderr(&o));
        assert!(stderr(&o).contains("policy artifact"), "{}", stderr(&o));
    }
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"run": {"cycles": 0}}"#).unwrap();
    let o = run(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&path, r#"{"unknown_section": 1}"#).unwrap();
    let o = run(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_round_trips() {
    let cfg = Config::default();
    let text = cfg.to_json();
    let back = Config::from_json(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &tiny_config(&dir.path().join("p.json")));
    let parsed = Config::load(&path).unwrap();
    assert_eq!(parsed.run.cycles, 3);
    assert_eq!(parsed.run.ga.population, 6);
    assert_eq!(parsed.run.ga.elite_fraction, 0.25);
    let o = run(&["config", "--config", path.to_str().unwrap(), "--seed", "11"]);
    assert!(o.status.success());
    let printed = Config::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let mut expect = parsed.clone();
    expect.override_seed(11);
    assert_eq!(printed, expect);
}

#[test]
fn trained_artifact_is_reproducible_and_usable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = train_tiny(a.path());
    let pb = train_tiny(b.path());
    let ha = teamplan_cli::commands::sha256_file(&pa).unwrap();
    let hb = teamplan_cli::commands::sha256_file(&pb).unwrap();
    assert_eq!(ha, hb);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pa.with_file_name("train_metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["artifact_sha256"], ha);

    let policy = DiffusionPolicy::load(&pa).unwrap();
    let mut rng = teamplan::seeded_rng(0);
    let traj = policy.sample_unsteered(TaskId(1), &mut rng).unwrap();
    assert!(traj.duration() > 0.0);
}

#[test]
fn run_refuses_to_overwrite_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let policy = train_tiny(dir.path());
    let cfg = write_config(dir.path(), &tiny_config(&policy));
    let out = dir.path().join("run");
    let args = ["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--archetype", "slow-outside"];
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let log_path = out.join("run.jsonl");
    let first = std::fs::read_to_string(&log_path).unwrap();
    let log = RunLog::from_jsonl(&first).unwrap();
    assert_eq!(log.len(), 3);
    assert!(std::fs::read_to_string(out.join("run.svg")).unwrap().starts_with("<svg"));

    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("refusing to overwrite"));
    assert_eq!(std::fs::read_to_string(&log_path).unwrap(), first);

    let o = run(&[&args[..], &["--force"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let again = RunLog::from_jsonl(&std::fs::read_to_string(&log_path).unwrap()).unwrap();
    assert_eq!(again.canonical_jsonl(), log.canonical_jsonl());

    // the run's recorded config.json is picked up without --config
    let o = run(&["replay", log_path.to_str().unwrap(), "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("replay matches"));
    let o = run(&["replay", log_path.to_str().unwrap(), "--verify", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("replay diverges"));

    let plots = dir.path().join("plots");
    let o = run(&["plot", log_path.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(plots.join("run.svg").exists());
}

#[test]
fn ablation_writes_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let policy = train_tiny(dir.path());
    let mut value = tiny_config(&policy);
    value["run"]["cycles"] = serde_json::json!(2);
    let cfg = write_config(dir.path(), &value);
    let out = dir.path().join("abl");
    let o = run(&["ablation", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cells: Vec<_> = std::fs::read_dir(out.join("cells")).unwrap().collect();
    assert_eq!(cells.len(), 16);
    assert!(out.join("cells/cell-fast-middle-space-time.json").exists());
    assert!(out.join("ablation.svg").exists());

    let plots = dir.path().join("plots");
    let o = run(&["plot", out.join("ablation.json").to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(plots.join("ablation.svg")).unwrap();
    assert_eq!(svg, std::fs::read_to_string(out.join("ablation.svg")).unwrap());
}

#[test]
fn busy_port_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let policy = train_tiny(dir.path());
    let cfg = write_config(dir.path(), &tiny_config(&policy));
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = dir.path().join("serve");
    let o = run(&["serve", "--config", cfg.to_str().unwrap(), "--addr", &addr, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("port busy"), "{}", stderr(&o));
}
