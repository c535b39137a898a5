//! Genome variation operators.

use crate::domain::{Agent, ScheduleGenome, Step, TaskId};
use crate::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Move one task to the other agent.
    SwapAgent,
    /// Exchange two steps within one agent's sequence.
    Reorder,
    /// Exchange the tails of the two sequences after random cut points.
    Crossover,
    /// Insert a wait on a random task at a random position.
    AddWait,
    /// Delete a random wait.
    RemoveWait,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::SwapAgent,
        Mutation::Reorder,
        Mutation::Crossover,
        Mutation::AddWait,
        Mutation::RemoveWait,
    ];
}

fn random_agent(rng: &mut SimRng) -> Agent {
    if rng.random_bool(0.5) {
        Agent::Human
    } else {
        Agent::Robot
    }
}

/// Insert `Wait(task)` into `agent`'s sequence at `index`, then repair.
pub fn add_wait(genome: &ScheduleGenome, agent: Agent, task: TaskId, index: usize) -> ScheduleGenome {
    let mut g = genome.clone();
    let seq = g.seq_mut(agent);
    let index = index.min(seq.len());
    seq.insert(index, Step::Wait(task));
    g.repair();
    g
}

/// Apply one operator and repair the result.
pub fn apply(genome: &ScheduleGenome, op: Mutation, n_tasks: usize, rng: &mut SimRng) -> ScheduleGenome {
    let mut g = genome.clone();
    match op {
        Mutation::SwapAgent => {
            let task = TaskId(rng.random_range(0..n_tasks));
            if let Some(from) = g.agent_of(task) {
                g.seq_mut(from).retain(|s| *s != Step::Do(task));
                let to = g.seq_mut(from.other());
                let at = rng.random_range(0..=to.len());
                to.insert(at, Step::Do(task));
            }
        }
        Mutation::Reorder => {
            let agent = random_agent(rng);
            let agent = if g.seq(agent).len() >= 2 { agent } else { agent.other() };
            let seq = g.seq_mut(agent);
            if seq.len() >= 2 {
                let i = rng.random_range(0..seq.len());
                let mut j = rng.random_range(0..seq.len() - 1);
                if j >= i {
                    j += 1;
                }
                seq.swap(i, j);
            }
        }
        Mutation::Crossover => {
            let a = rng.random_range(0..=g.human.len());
            let b = rng.random_range(0..=g.robot.len());
            let human_tail = g.human.split_off(a);
            let robot_tail = g.robot.split_off(b);
            g.human.extend(robot_tail);
            g.robot.extend(human_tail);
        }
        Mutation::AddWait => {
            let agent = random_agent(rng);
            let task = TaskId(rng.random_range(0..n_tasks));
            let at = rng.random_range(0..=g.seq(agent).len());
            return add_wait(&g, agent, task, at);
        }
        Mutation::RemoveWait => {
            let waits: Vec<(Agent, usize)> = Agent::ALL
                .into_iter()
                .flat_map(|a| {
                    g.seq(a)
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.is_wait())
                        .map(move |(i, _)| (a, i))
                        .collect::<Vec<_>>()
                })
                .collect();
            if !waits.is_empty() {
                let (agent, i) = waits[rng.random_range(0..waits.len())];
                g.seq_mut(agent).remove(i);
            }
        }
    }
    g.repair();
    g
}

/// Pick an operator with probability proportional to `weights` and apply it.
pub fn mutate(
    genome: &ScheduleGenome,
    weights: &[f64; 5],
    n_tasks: usize,
    rng: &mut SimRng,
) -> (Mutation, ScheduleGenome) {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random_range(0.0..total);
    let mut op = Mutation::ALL[4];
    for (m, w) in Mutation::ALL.iter().zip(weights) {
        if r < *w {
            op = *m;
            break;
        }
        r -= w;
    }
    (op, apply(genome, op, n_tasks, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn add_wait_example() {
        let g = ScheduleGenome::from_tasks(&[2, 1], &[3, 0]);
        let m = add_wait(&g, Agent::Robot, TaskId(1), 1);
        assert_eq!(
            m.robot,
            vec![Step::Do(TaskId(3)), Step::Wait(TaskId(1)), Step::Do(TaskId(0))]
        );
        // own task or trailing position is repaired away
        assert_eq!(add_wait(&g, Agent::Robot, TaskId(3), 1), g);
        assert_eq!(add_wait(&g, Agent::Robot, TaskId(1), 2), g);
    }

    #[test]
    fn remove_wait_without_waits_is_identity() {
        let g = ScheduleGenome::from_tasks(&[2, 1], &[3, 0]);
        let mut rng = seeded_rng(1);
        assert_eq!(apply(&g, Mutation::RemoveWait, 4, &mut rng), g);
    }

    #[test]
    fn operators_preserve_validity() {
        let mut rng = seeded_rng(9);
        let mut g = ScheduleGenome::from_tasks(&[2, 1], &[3, 0]);
        for _ in 0..2000 {
            let (_, next) = mutate(&g, &[1.0; 5], 4, &mut rng);
            next.validate(4).unwrap();
            g = next;
        }
    }
}
