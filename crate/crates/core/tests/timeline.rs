use proptest::prelude::*;
use teamplan::domain::{check_feasible, diversity_cost, simulate_timeline, Agent, AllocationHistory, ScheduleGenome, Step, TaskId, TaskSet};

fn fetch_precedence() -> TaskSet {
    TaskSet::without_goals(4, [(2, 0), (2, 1), (3, 0), (3, 1)]).unwrap()
}

/// A random acyclic task set with up to 6 tasks and a genome assigning every
/// task once, plus a few non-trailing waits on the other agent's tasks.
fn case() -> impl Strategy<Value = (TaskSet, ScheduleGenome, Vec<f64>, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec((any::<bool>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..3),
            proptest::collection::vec(0.1f64..10.0, n),
            proptest::collection::vec(0.1f64..10.0, n),
        )
            .prop_map(|(n, edges, order, to_human, waits, h, r)| {
                let mut prec = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if edges[k] {
                            prec.push((order[i], order[j]));
                        }
                        k += 1;
                    }
                }
                let ts = TaskSet::without_goals(n, prec).unwrap();
                let mut g = ScheduleGenome::default();
                for &t in &order {
                    let agent = if to_human[t] { Agent::Human } else { Agent::Robot };
                    g.seq_mut(agent).push(Step::Do(TaskId(t)));
                }
                for (human, pos, target) in waits {
                    let agent = if human { Agent::Human } else { Agent::Robot };
                    let others: Vec<TaskId> = g.tasks_of(agent.other()).collect();
                    let len = g.seq(agent).len();
                    if others.is_empty() || len == 0 {
                        continue;
                    }
                    let t = *target.get(&others);
                    g.seq_mut(agent).insert(pos.index(len), Step::Wait(t));
                }
                (ts, g, h, r)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn timelines_respect_the_schedule((ts, g, h, r) in case()) {
        prop_assert!(g.validate(ts.len()).is_ok());
        let Ok(tl) = simulate_timeline(&g, &ts, &h, &r) else { return Ok(()) };
        for i in 0..ts.len() {
            let t = &tl.times[i];
            let d = if t.agent == Agent::Human { h[i] } else { r[i] };
            prop_assert!((t.finish - t.start - d).abs() < 1e-9);
            prop_assert!(t.start >= 0.0);
            prop_assert_eq!(Some(t.agent), g.agent_of(TaskId(i)));
            for p in ts.predecessors(TaskId(i)) {
                prop_assert!(tl.times[p.0].finish <= t.start + 1e-12);
            }
        }
        for agent in [Agent::Human, Agent::Robot] {
            let mut free = 0.0f64;
            for step in g.seq(agent) {
                match *step {
                    Step::Do(t) => {
                        prop_assert!(tl.times[t.0].start >= free - 1e-12);
                        free = tl.times[t.0].finish;
                    }
                    Step::Wait(t) => free = free.max(tl.times[t.0].finish),
                }
            }
        }
        let last = tl.times.iter().map(|t| t.finish).fold(0.0, f64::max);
        prop_assert_eq!(tl.makespan, last);
    }

    #[test]
    fn infeasible_genomes_never_simulate((ts, g, h, r) in case()) {
        if !check_feasible(&g, &ts) {
            prop_assert!(simulate_timeline(&g, &ts, &h, &r).is_err());
        }
    }

    #[test]
    fn diversity_is_a_balance_measure(
        counts in proptest::collection::vec((0u32..6, 0u32..6), 4),
        shift in 0u32..5,
        to_human in proptest::collection::vec(any::<bool>(), 4),
    ) {
        let human: Vec<usize> = (0..4).filter(|&i| to_human[i]).collect();
        let robot: Vec<usize> = (0..4).filter(|&i| !to_human[i]).collect();
        let g = ScheduleGenome::from_tasks(&human, &robot);
        let mut hist = AllocationHistory::new(4);
        for (i, &(a, b)) in counts.iter().enumerate() {
            hist.counts[i] = [a, b];
        }
        let z = diversity_cost(&g, &hist);
        prop_assert!(z >= 0.0);
        let balanced = (0..4).all(|i| {
            let mut c = hist.counts[i];
            c[if to_human[i] { Agent::Human.index() } else { Agent::Robot.index() }] += 1;
            c[0] == c[1]
        });
        prop_assert_eq!(z == 0.0, balanced);
        let mut shifted = hist.clone();
        for c in &mut shifted.counts {
            c[0] += shift;
            c[1] += shift;
        }
        prop_assert!((diversity_cost(&g, &shifted) - z).abs() < 1e-12);
    }
}

#[test]
fn feasibility_examples() {
    let ts = fetch_precedence();
    let violating = ScheduleGenome::from_tasks(&[0, 2], &[1, 3]);
    assert!(!check_feasible(&violating, &ts));
    let missing = ScheduleGenome::from_tasks(&[2], &[3, 0]);
    assert!(!check_feasible(&missing, &ts));
    let example = ScheduleGenome::new(
        vec![Step::Do(TaskId(2)), Step::Do(TaskId(1))],
        vec![Step::Do(TaskId(3)), Step::Wait(TaskId(1)), Step::Do(TaskId(0))],
    );
    assert!(check_feasible(&example, &ts));
}

#[test]
fn single_task_diversity() {
    // robot twice before, human never; the candidate gives the robot a third
    let g = ScheduleGenome::from_tasks(&[], &[0]);
    let mut hist = AllocationHistory::new(1);
    hist.counts[0][Agent::Robot.index()] = 1;
    assert_eq!(diversity_cost(&g, &hist), 1.0);
}
