mod common;

use common::{library, world, Fixture};
use teamplan::domain::{Agent, ScheduleGenome, Step, TaskId};
use teamplan::fetch::{deploy_archetype, generate_demonstrations, robot_state, HumanArchetype};
use teamplan::geometry::path_crosses;
use teamplan::scheduler::{evaluate, GaConfig, TrajectoryMemory};
use teamplan::seeded_rng;

fn plan(genome: &ScheduleGenome) -> teamplan::domain::PlanResult {
    let w = world();
    let fx = Fixture::new(&w, Box::new(library(&w, 4)));
    let ga = GaConfig { samples: 20, ..GaConfig::default() };
    let r = evaluate(genome, &fx.problem(), &mut TrajectoryMemory::new(), &ga, &mut seeded_rng(1)).unwrap();
    assert!(r.feasible);
    r
}

/// One-sided p-value that `a` tends to be smaller than `b`, from the
/// normal approximation to the Mann-Whitney U statistic.
fn mann_whitney_less(a: &[f64], b: &[f64]) -> f64 {
    let u: f64 = a
        .iter()
        .map(|x| b.iter().map(|y| if x < y { 1.0 } else if x == y { 0.5 } else { 0.0 }).sum::<f64>())
        .sum();
    let (n, m) = (a.len() as f64, b.len() as f64);
    let z = (u - n * m / 2.0) / (n * m * (n + m + 1.0) / 12.0).sqrt();
    // upper tail of the standard normal via erfc
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

#[test]
fn fast_humans_finish_sooner() {
    let w = world();
    let g = ScheduleGenome::from_tasks(&[2, 0], &[3, 1]);
    let p = plan(&g);
    let durations = |name: &str, seed| {
        let a: HumanArchetype = name.parse().unwrap();
        let mut rng = seeded_rng(seed);
        (0..50)
            .map(|_| deploy_archetype(&p, &w, a, 0.1, &mut rng).unwrap().human_durations[&TaskId(2)])
            .collect::<Vec<_>>()
    };
    let fast = durations("fast-middle", 1);
    let slow = durations("slow-middle", 2);
    assert!(mann_whitney_less(&fast, &slow) < 0.01);
}

#[test]
fn robot_holds_until_the_awaited_task_is_done() {
    let w = world();
    let ts = w.task_set().unwrap();
    let home = w.homes.robot.center;
    for genome in [
        ScheduleGenome::new(
            vec![Step::Do(TaskId(2)), Step::Do(TaskId(3)), Step::Do(TaskId(1))],
            vec![Step::Wait(TaskId(2)), Step::Do(TaskId(0))],
        ),
        ScheduleGenome::new(
            vec![Step::Do(TaskId(2)), Step::Do(TaskId(0))],
            vec![Step::Wait(TaskId(2)), Step::Do(TaskId(3)), Step::Do(TaskId(1))],
        ),
    ] {
        let p = plan(&genome);
        let obs = deploy_archetype(&p, &w, "slow-middle".parse().unwrap(), 0.05, &mut seeded_rng(3)).unwrap();
        let done = obs.tasks[2].finish;
        let human_finish: Vec<Option<f64>> = obs
            .tasks
            .iter()
            .map(|r| (r.agent == Agent::Human).then_some(r.finish))
            .collect();
        let mut t = 0.0;
        while t < done {
            let s = robot_state(&p, &ts, home, &human_finish, t);
            assert_eq!(s.position, home, "robot moved at {t} before {done}");
            t += 0.05;
        }
        let robot_first = obs.tasks.iter().filter(|r| r.agent == Agent::Robot).map(|r| r.start).fold(f64::INFINITY, f64::min);
        assert!(robot_first >= done);
    }
}

#[test]
fn middle_humans_use_the_corridor() {
    let w = world();
    let p = plan(&ScheduleGenome::from_tasks(&[2, 3], &[0, 1]));
    for name in ["fast-middle", "slow-middle"] {
        let mut rng = seeded_rng(8);
        let through = (0..100)
            .filter(|_| {
                let obs = deploy_archetype(&p, &w, name.parse().unwrap(), 0.1, &mut rng).unwrap();
                let path = obs.human_trajectories[&TaskId(2)].active_points().to_vec();
                w.classify(&path, &["middle_corridor"]).is_some()
            })
            .count();
        assert!(through >= 95, "{name}: {through}/100");
    }
}

#[test]
fn deployments_are_physical() {
    let w = world();
    let ts = w.task_set().unwrap();
    for (k, genome) in [
        ScheduleGenome::from_tasks(&[2, 0], &[3, 1]),
        ScheduleGenome::from_tasks(&[3, 2, 1, 0], &[]),
        ScheduleGenome::from_tasks(&[], &[2, 3, 0, 1]),
        ScheduleGenome::from_tasks(&[2, 3], &[0, 1]),
    ]
    .iter()
    .enumerate()
    {
        let p = plan(genome);
        for a in HumanArchetype::ALL {
            let obs = deploy_archetype(&p, &w, a, 0.1, &mut seeded_rng(k as u64)).unwrap();
            // longest precedence chain of realised durations
            let mut chain = [0.0f64; 4];
            for t in [2, 3, 0, 1] {
                let r = &obs.tasks[t];
                let ready = ts.predecessors(TaskId(t)).iter().map(|p| chain[p.0]).fold(0.0, f64::max);
                chain[t] = ready + (r.finish - r.start);
            }
            let bound = chain.iter().copied().fold(0.0, f64::max);
            assert!(obs.makespan >= bound - 1e-9);
            for traj in obs.human_trajectories.values().chain(obs.robot_trajectories.values()) {
                assert!(!path_crosses(traj.active_points(), &w.walls));
            }
        }
    }
}

#[test]
fn archetypes_are_deterministic() {
    let w = world();
    let p = plan(&ScheduleGenome::from_tasks(&[2, 0], &[3, 1]));
    for a in HumanArchetype::ALL {
        let x = deploy_archetype(&p, &w, a, 0.1, &mut seeded_rng(6)).unwrap();
        let y = deploy_archetype(&p, &w, a, 0.1, &mut seeded_rng(6)).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn demonstrations_follow_the_router() {
    let w = world();
    let demos = generate_demonstrations(&w, 40, &mut seeded_rng(2)).unwrap();
    for (t, list) in &demos {
        assert_eq!(list.len(), 40);
        for d in list {
            assert!(d.reaches(w.goal(*t), 0.03));
            assert!(!path_crosses(d.active_points(), &w.walls));
        }
    }
    let modes = |t: usize| {
        let mut middle = 0;
        for d in &demos[&TaskId(t)] {
            if w.classify(d.active_points(), &["middle_corridor"]).is_some() {
                middle += 1;
            }
        }
        middle
    };
    assert_eq!(modes(2), 20);
    assert_eq!(modes(3), 20);
    // single route: every demo stays close to the mean path
    let list = &demos[&TaskId(0)];
    let len = list.iter().map(|d| d.completion_index).max().unwrap();
    for d in list {
        for k in 0..=len {
            let mean = list.iter().map(|e| e.points[k.min(e.len() - 1)]).fold((0.0, 0.0), |acc, p| (acc.0 + p.x, acc.1 + p.y));
            let c = teamplan::geometry::Point::new(mean.0 / 40.0, mean.1 / 40.0);
            assert!(d.points[k.min(d.len() - 1)].dist(c) < 0.15);
        }
    }
}
