//! Event-driven execution semantics for a two-agent schedule.

use super::{Agent, ScheduleGenome, Step, TaskId, TaskSet};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskTimes {
    pub agent: Agent,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineResult {
    /// Indexed by task id.
    pub times: Vec<TaskTimes>,
    pub makespan: f64,
}

impl TimelineResult {
    pub fn interval(&self, task: TaskId) -> (f64, f64) {
        let t = self.times[task.0];
        (t.start, t.finish)
    }
}

/// Simulate both agents executing their sequences.
///
/// `human` and `robot` hold durations indexed by task id; only entries for
/// tasks the agent executes are read. A `Do(i)` starts once the agent is free
/// and every predecessor of `i` has finished; a `Wait(i)` holds the agent
/// until `i` finishes. Start times are the earliest consistent with those
/// rules, so the result does not depend on event tie-breaking.
pub fn simulate_timeline(
    genome: &ScheduleGenome,
    task_set: &TaskSet,
    human: &[f64],
    robot: &[f64],
) -> Result<TimelineResult> {
    let n = task_set.len();
    genome.validate(n)?;
    if human.len() < n || robot.len() < n {
        return Err(Error::InvalidConfig(format!(
            "duration tables cover {} / {} of {n} tasks",
            human.len(),
            robot.len()
        )));
    }
    let mut start = vec![f64::NAN; n];
    let mut finish = vec![f64::NAN; n];
    run(genome, task_set, human, robot, &mut start, &mut finish)?;
    let times = (0..n)
        .map(|i| TaskTimes {
            agent: genome.agent_of(TaskId(i)).expect("validated"),
            start: start[i],
            finish: finish[i],
        })
        .collect();
    let makespan = finish.iter().copied().fold(0.0, f64::max);
    Ok(TimelineResult { times, makespan })
}

/// Makespan only, reusing caller-provided buffers. The genome must already
/// be valid for `task_set`; returns `None` on deadlock.
pub(crate) fn makespan_unchecked(
    genome: &ScheduleGenome,
    task_set: &TaskSet,
    human: &[f64],
    robot: &[f64],
    start: &mut Vec<f64>,
    finish: &mut Vec<f64>,
) -> Option<f64> {
    let n = task_set.len();
    start.clear();
    start.resize(n, f64::NAN);
    finish.clear();
    finish.resize(n, f64::NAN);
    run(genome, task_set, human, robot, start, finish).ok()?;
    Some(finish.iter().copied().fold(0.0, f64::max))
}

fn run(
    genome: &ScheduleGenome,
    task_set: &TaskSet,
    human: &[f64],
    robot: &[f64],
    start: &mut [f64],
    finish: &mut [f64],
) -> Result<()> {
    let seqs: [&[Step]; 2] = [&genome.human, &genome.robot];
    let durations: [&[f64]; 2] = [human, robot];
    let mut ptr = [0usize; 2];
    let mut free = [0.0f64; 2];
    loop {
        let mut progress = false;
        for a in 0..2 {
            while let Some(&step) = seqs[a].get(ptr[a]) {
                match step {
                    Step::Do(t) => {
                        let mut ready = free[a];
                        let mut blocked = false;
                        for p in task_set.predecessors(t) {
                            let f = finish[p.0];
                            if f.is_nan() {
                                blocked = true;
                                break;
                            }
                            ready = ready.max(f);
                        }
                        if blocked {
                            break;
                        }
                        start[t.0] = ready;
                        finish[t.0] = ready + durations[a][t.0];
                        free[a] = finish[t.0];
                    }
                    Step::Wait(t) => {
                        let f = finish[t.0];
                        if f.is_nan() {
                            break;
                        }
                        free[a] = free[a].max(f);
                    }
                }
                ptr[a] += 1;
                progress = true;
            }
        }
        let remaining = (seqs[0].len() - ptr[0]) + (seqs[1].len() - ptr[1]);
        if remaining == 0 {
            return Ok(());
        }
        if !progress {
            return Err(Error::Deadlock { remaining });
        }
    }
}

/// True iff the genome is structurally valid and executes without deadlock.
pub fn check_feasible(genome: &ScheduleGenome, task_set: &TaskSet) -> bool {
    let n = task_set.len();
    if genome.validate(n).is_err() {
        return false;
    }
    let unit = vec![1.0; n];
    simulate_timeline(genome, task_set, &unit, &unit).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fetch() -> TaskSet {
        TaskSet::without_goals(4, [(2, 0), (2, 1), (3, 0), (3, 1)]).unwrap()
    }

    #[test]
    fn serial_single_agent() {
        let ts = TaskSet::without_goals(2, []).unwrap();
        let g = ScheduleGenome::from_tasks(&[0, 1], &[]);
        let r = simulate_timeline(&g, &ts, &[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.makespan, 7.0);
    }

    #[test]
    fn fetch_parallel_example() {
        let ts = fetch();
        let g = ScheduleGenome::from_tasks(&[2, 1], &[3, 0]);
        let ones = [1.0; 4];
        let r = simulate_timeline(&g, &ts, &ones, &ones).unwrap();
        assert_eq!(r.makespan, 2.0);
        assert_eq!(r.times[0].start, 1.0);
        assert_eq!(r.times[1].start, 1.0);
    }

    #[test]
    fn circular_wait_deadlocks() {
        let ts = TaskSet::without_goals(2, []).unwrap();
        let g = ScheduleGenome::new(
            vec![Step::Wait(TaskId(0)), Step::Do(TaskId(1))],
            vec![Step::Wait(TaskId(1)), Step::Do(TaskId(0))],
        );
        let ones = [1.0; 2];
        assert!(matches!(
            simulate_timeline(&g, &ts, &ones, &ones),
            Err(Error::Deadlock { .. })
        ));
        assert!(!check_feasible(&g, &ts));
    }

    #[test]
    fn unassigned_wait_target_rejected() {
        let ts = TaskSet::without_goals(3, []).unwrap();
        // task 2 is never executed
        let g = ScheduleGenome::new(
            vec![Step::Do(TaskId(1))],
            vec![Step::Wait(TaskId(2)), Step::Do(TaskId(0))],
        );
        let ones = [1.0; 3];
        assert!(matches!(
            simulate_timeline(&g, &ts, &ones, &ones),
            Err(Error::InvalidGenome(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let ts = fetch();
        let bad = ScheduleGenome::from_tasks(&[0, 2], &[1, 3]);
        assert!(!check_feasible(&bad, &ts));
        let missing = ScheduleGenome::from_tasks(&[2], &[3, 0]);
        assert!(!check_feasible(&missing, &ts));
        let with_wait = ScheduleGenome::new(
            vec![Step::Do(TaskId(2)), Step::Do(TaskId(1))],
            vec![Step::Do(TaskId(3)), Step::Wait(TaskId(1)), Step::Do(TaskId(0))],
        );
        assert!(check_feasible(&with_wait, &ts));
    }

    #[test]
    fn wait_delays_robot() {
        let ts = fetch();
        let g = ScheduleGenome::new(
            vec![Step::Do(TaskId(2)), Step::Do(TaskId(1))],
            vec![Step::Do(TaskId(3)), Step::Wait(TaskId(1)), Step::Do(TaskId(0))],
        );
        let human = [0.0, 5.0, 2.0, 0.0];
        let robot = [1.0, 0.0, 0.0, 3.0];
        let r = simulate_timeline(&g, &ts, &human, &robot).unwrap();
        // τ1 starts after τ2 (2) and τ3 (3) → [3, 8); τ0 waits for τ1.
        assert_eq!(r.interval(TaskId(1)), (3.0, 8.0));
        assert_eq!(r.interval(TaskId(0)), (8.0, 9.0));
        assert_eq!(r.makespan, 9.0);
    }
}
