mod common;

use common::{library, world};
use teamplan::adapt::{run, AdaptationLevel, HumanSource, LambdaSchedule, RunConfig, RunLog};
use teamplan::domain::TaskId;
use teamplan::scheduler::GaConfig;

fn config(level: AdaptationLevel, cycles: usize) -> RunConfig {
    RunConfig {
        cycles,
        level,
        ga: GaConfig { population: 10, generations: 3, samples: 30, ..GaConfig::default() },
        human: HumanSource::Archetype("fast-middle".parse().unwrap()),
        seed: 21,
        grid: 12,
        init_draws: 2,
        reference_draws: 20,
        dump_models: true,
        ..RunConfig::default()
    }
}

fn go(cfg: &RunConfig) -> RunLog {
    let w = world();
    run(cfg, &w, &library(&w, 4)).unwrap()
}

#[test]
fn no_adaptation_keeps_the_models() {
    let log = go(&config(AdaptationLevel::None, 4));
    let first = &log.records[0].models;
    assert!(log.records.iter().all(|r| r.models.temporal_hash == first.temporal_hash && r.models.spatial_hash == first.spatial_hash));
}

#[test]
fn time_only_moves_the_temporal_model() {
    let log = go(&config(AdaptationLevel::Time, 4));
    for pair in log.records.windows(2) {
        assert_eq!(pair[0].models.spatial_hash, pair[1].models.spatial_hash);
        assert_ne!(pair[0].models.temporal_hash, pair[1].models.temporal_hash);
    }
}

#[test]
fn updates_touch_only_human_tasks() {
    let log = go(&config(AdaptationLevel::SpaceTime, 4));
    for pair in log.records.windows(2) {
        let (before, after) = (&pair[0].models, &pair[1].models);
        let human: Vec<TaskId> = pair[1].plan.human.iter().filter(|s| !s.is_wait()).map(|s| s.task()).collect();
        for t in (0..4).map(TaskId) {
            let same_t = before.temporal.as_ref().unwrap().params(t).unwrap() == after.temporal.as_ref().unwrap().params(t).unwrap();
            let same_s = before.spatial.as_ref().unwrap().fields[&t] == after.spatial.as_ref().unwrap().fields[&t];
            assert_eq!(same_t, !human.contains(&t), "temporal {t}");
            assert_eq!(same_s, !human.contains(&t), "spatial {t}");
        }
    }
}

#[test]
fn diversity_weight_for_the_first_half_only() {
    let schedule = LambdaSchedule::default();
    for c in 0..16 {
        assert_eq!(schedule.at(c, 16), if c < 8 { 15.0 } else { 0.0 });
    }
    let log = go(&config(AdaptationLevel::SpaceTime, 6));
    for r in &log.records {
        assert_eq!(r.lambda, if r.cycle < 3 { 15.0 } else { 0.0 });
        let p = &r.plan;
        let planned = p.makespan_cost.unwrap() + 1.75 * p.spatial_cost;
        assert_eq!(p.cost.unwrap(), planned + r.lambda * p.diversity_cost);
        assert_eq!(r.planned_cost, Some(planned));
    }
}

#[test]
fn runs_reproduce_byte_for_byte() {
    let cfg = config(AdaptationLevel::SpaceTime, 3);
    let a = go(&cfg);
    let b = go(&cfg);
    assert_eq!(a.canonical_jsonl(), b.canonical_jsonl());
    let back = RunLog::from_jsonl(&a.to_jsonl()).unwrap();
    assert_eq!(back.canonical_jsonl(), a.canonical_jsonl());
    assert!(a.records.iter().all(|r| r.observation.is_some() && r.aborted.is_none()));
    assert!(a.records.iter().all(|r| !r.trace.is_empty()));
}
