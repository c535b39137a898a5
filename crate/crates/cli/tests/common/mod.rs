#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_teamplan"))
}

pub fn world_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/fetch_world.json")
}

/// A configuration small enough to train and run in seconds.
pub fn tiny_config(policy: &Path) -> serde_json::Value {
    serde_json::json!({
        "world": world_path(),
        "policy": policy,
        "train": {
            "demos_per_task": 20,
            "diffusion": {
                "hidden": 32,
                "hidden_layers": 1,
                "diffusion_steps": 10,
                "max_steps": 200,
                "eval_every": 100,
                "min_demos": 20,
                "loss_threshold": 10.0,
                "seed": 3
            }
        },
        "run": {
            "cycles": 3,
            "ga": { "population": 6, "generations": 2, "samples": 10 },
            "init_draws": 2,
            "reference_draws": 10,
            "grid": 8
        },
        "ablation": { "trials": 1, "final_cycles": 1 },
        "serve": { "addr": "127.0.0.1:0" }
    })
}

pub fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Trains the tiny policy into `dir/policy` and returns the artifact path.
pub fn train_tiny(dir: &Path) -> PathBuf {
    let policy_dir = dir.join("policy");
    let policy = policy_dir.join("policy.json");
    let cfg = write_config(dir, &tiny_config(&policy));
    let o = run(&["train-policy", "--config", cfg.to_str().unwrap(), "--out", policy_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    policy
}
