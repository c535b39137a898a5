use crate::{input_error, runtime_error, CliError, Config};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use teamplan::adapt::{run, run_ablation_suite, AblationResults, HumanSource, RunLog};
use teamplan::fetch::{generate_demonstrations, WorldSpec};
use teamplan::motion::DiffusionPolicy;
use teamplan::report::{ablation_svg, run_svg};
use teamplan::seeded_rng;

/// Seed offset separating demonstration noise from training noise.
const DEMO_STREAM: u64 = 0x00de_0000;

pub fn load_world(path: &Path) -> Result<WorldSpec, CliError> {
    if !path.exists() {
        return Err(input_error(format!("world file {} not found", path.display())));
    }
    WorldSpec::load(path).map_err(|e| input_error(format!("cannot load world {}: {e}", path.display())))
}

pub fn load_policy(path: &Path) -> Result<DiffusionPolicy, CliError> {
    if !path.exists() {
        return Err(input_error(format!(
            "policy artifact {} not found; create one with `teamplan train-policy`",
            path.display()
        )));
    }
    DiffusionPolicy::load(path).map_err(|e| input_error(format!("cannot load policy {}: {e}", path.display())))
}

/// Resolves output files under `out`, refusing to replace existing ones
/// unless `force` is set. Nothing is written here beyond the directories.
pub fn claim(out: &Path, names: &[String], force: bool) -> Result<Vec<PathBuf>, CliError> {
    let paths: Vec<PathBuf> = names.iter().map(|n| out.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(input_error(format!(
                "refusing to overwrite {} (pass --force)",
                p.display()
            )));
        }
    }
    for p in &paths {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(paths)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime_error)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

#[derive(Serialize)]
struct TrainMetrics {
    artifact_sha256: String,
    best_val_loss: f64,
    steps: usize,
    demos_per_task: usize,
    loss_log: Vec<teamplan::motion::LossRecord>,
}

pub fn train_policy(cfg: &Config, out: &Path, force: bool) -> Result<(), CliError> {
    let world = load_world(&cfg.world)?;
    let names = ["policy.json", "demos.json", "train_metrics.json"].map(String::from);
    let [artifact, demos_path, metrics] = <[PathBuf; 3]>::try_from(claim(out, &names, force)?).unwrap();
    let tc = &cfg.train.diffusion;
    let mut rng = seeded_rng(tc.seed ^ DEMO_STREAM);
    let demos = generate_demonstrations(&world, cfg.train.demos_per_task, &mut rng)?;
    log::info!("training on {} demonstrations per task", cfg.train.demos_per_task);
    let policy = DiffusionPolicy::train(world.motion_context(), &demos, tc)?;
    policy.save(&artifact)?;
    write_json(&demos_path, &demos)?;
    let hash = sha256_file(&artifact)?;
    let best = policy.loss_log.iter().map(|r| r.val).fold(f64::INFINITY, f64::min);
    write_json(
        &metrics,
        &TrainMetrics {
            artifact_sha256: hash.clone(),
            best_val_loss: best,
            steps: policy.loss_log.last().map_or(0, |r| r.step),
            demos_per_task: cfg.train.demos_per_task,
            loss_log: policy.loss_log.clone(),
        },
    )?;
    println!("wrote {} (sha256 {hash}, best validation loss {best:.4})", artifact.display());
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    cycles: usize,
    level: String,
    human: HumanSource,
    seed: u64,
    final_reference_cost: Option<f64>,
    final_planned_cost: Option<f64>,
    mean_realized_makespan: Option<f64>,
}

fn summarize(cfg: &Config, log: &RunLog) -> RunSummary {
    let last = log.records.last();
    let makespans: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| r.observation.as_ref().map(|o| o.makespan))
        .collect();
    RunSummary {
        cycles: log.len(),
        level: cfg.run.level.to_string(),
        human: cfg.run.human,
        seed: cfg.run.seed,
        final_reference_cost: last.and_then(|r| r.reference.map(|c| c.cost)),
        final_planned_cost: last.and_then(|r| r.planned_cost),
        mean_realized_makespan: (!makespans.is_empty())
            .then(|| makespans.iter().sum::<f64>() / makespans.len() as f64),
    }
}

pub fn print_log(log: &RunLog) {
    println!("cycle  lambda  planned   reference  makespan  human tasks");
    for r in &log.records {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let human: Vec<String> = r
            .plan
            .human
            .iter()
            .map(|s| format!("{s:?}"))
            .collect();
        println!(
            "{:>5}  {:>6.1}  {:>8}  {:>9}  {:>8}  {}{}",
            r.cycle,
            r.lambda,
            fmt(r.planned_cost),
            fmt(r.reference.map(|c| c.cost)),
            fmt(r.observation.as_ref().map(|o| o.makespan)),
            human.join(" "),
            r.aborted.as_ref().map_or(String::new(), |a| format!("  aborted: {a}")),
        );
    }
}

fn run_log(cfg: &Config) -> Result<RunLog, CliError> {
    if cfg.run.human == HumanSource::Live {
        return Err(input_error("live runs go through `teamplan serve`"));
    }
    let world = load_world(&cfg.world)?;
    let policy = load_policy(&cfg.policy)?;
    Ok(run(&cfg.run, &world, &policy)?)
}

pub fn run_cmd(cfg: &Config, out: &Path, force: bool) -> Result<(), CliError> {
    let names = ["run.jsonl", "run.svg", "summary.json", "config.json"].map(String::from);
    let [log_path, svg, summary, config] = <[PathBuf; 4]>::try_from(claim(out, &names, force)?).unwrap();
    let log = run_log(cfg)?;
    std::fs::write(&log_path, log.to_jsonl())?;
    std::fs::write(&config, cfg.to_json())?;
    let title = format!("{} / {}", describe(cfg.run.human), cfg.run.level);
    std::fs::write(&svg, run_svg(&log, &title))?;
    write_json(&summary, &summarize(cfg, &log))?;
    print_log(&log);
    Ok(())
}

fn describe(h: HumanSource) -> String {
    match h {
        HumanSource::Archetype(a) => a.to_string(),
        HumanSource::Live => "live".into(),
    }
}

pub fn ablation_cmd(cfg: &Config, out: &Path, force: bool) -> Result<(), CliError> {
    let ab = cfg.ablation();
    let mut names = vec!["ablation.json".to_string(), "ablation.svg".to_string()];
    for a in &ab.archetypes {
        for l in &ab.levels {
            names.push(format!("cells/{}", teamplan::adapt::CellResult::file_name_for(*a, *l)));
        }
    }
    let paths = claim(out, &names, force)?;
    let world = load_world(&cfg.world)?;
    let policy = load_policy(&cfg.policy)?;
    let results = run_ablation_suite(&ab, &world, &policy)?;
    write_json(&paths[0], &results)?;
    std::fs::write(&paths[1], ablation_svg(&results))?;
    for cell in &results.cells {
        write_json(&out.join("cells").join(cell.file_name()), cell)?;
    }
    print_ablation(&results);
    Ok(())
}

pub fn print_ablation(results: &AblationResults) {
    let levels = &results.config.levels;
    let header: Vec<String> = levels.iter().map(|l| format!("{:>11}", l.name())).collect();
    println!("final median plan cost (last {} cycles)", results.config.final_cycles);
    println!("{:<14}{}", "archetype", header.join(""));
    for a in &results.config.archetypes {
        let row: Vec<String> = levels
            .iter()
            .map(|l| results.cell(*a, *l).map_or(format!("{:>11}", "-"), |c| format!("{:>11.3}", c.final_median)))
            .collect();
        println!("{:<14}{}", a.to_string(), row.join(""));
    }
}

pub fn plot_cmd(input: &Path, out: &Path, force: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| input_error(format!("cannot read {}: {e}", input.display())))?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let name = format!("{stem}.svg");
    let svg = if input.extension().is_some_and(|e| e == "jsonl") {
        let log = RunLog::from_jsonl(&text).map_err(|e| input_error(format!("not a run log: {e}")))?;
        run_svg(&log, stem)
    } else {
        let results: AblationResults =
            serde_json::from_str(&text).map_err(|e| input_error(format!("not an ablation table: {e}")))?;
        ablation_svg(&results)
    };
    let [path] = <[PathBuf; 1]>::try_from(claim(out, &[name], force)?).unwrap();
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Prints a stored run log; with `verify`, re-executes the configured run
/// and compares the two logs with timings excluded.
pub fn replay_cmd(cfg: &Config, input: &Path, verify: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| input_error(format!("cannot read {}: {e}", input.display())))?;
    let stored = RunLog::from_jsonl(&text).map_err(|e| input_error(format!("not a run log: {e}")))?;
    print_log(&stored);
    if verify {
        let fresh = run_log(cfg)?;
        let (a, b) = (stored.canonical_jsonl(), fresh.canonical_jsonl());
        if a != b {
            let cycle = a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(a.lines().count().min(b.lines().count()));
            return Err(runtime_error(format!("replay diverges at cycle {cycle}")));
        }
        println!("replay matches ({} cycles)", fresh.len());
    }
    Ok(())
}
