//! Genetic schedule optimisation with Monte-Carlo makespan estimation and
//! overlap-aware robot motion selection.

mod mutation;

pub use mutation::{add_wait, apply, mutate, Mutation};

use crate::domain::timeline::makespan_unchecked;
use crate::domain::{
    check_feasible, diversity_cost, simulate_timeline, Agent, AllocationHistory, Overlaps,
    PlanResult, ScheduleGenome, Step, TaskId, TaskSet, Trajectory,
};
use crate::error::{Error, Result};
use crate::motion::MotionPolicy;
use crate::spatial::{SpatialCostField, SpatialModel};
use crate::temporal::TemporalModel;
use crate::SimRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elite_fraction: f64,
    /// Selection weights for swap-agent, reorder, crossover, add-wait and
    /// remove-wait.
    pub mutation_weights: [f64; 5],
    /// Monte-Carlo makespan draws per evaluation.
    pub samples: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub fixed_point_cap: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 25,
            elite_fraction: 0.25,
            mutation_weights: [0.2; 5],
            samples: 200,
            gamma: 1.75,
            lambda: 0.0,
            fixed_point_cap: 5,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.samples < 1 {
            return bad("samples must be at least 1");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return bad("elite fraction must lie in (0, 1)");
        }
        if self.mutation_weights.iter().any(|w| !(0.0..=1.0).contains(w))
            || self.mutation_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("mutation probabilities must lie in [0, 1] and not all be 0");
        }
        if self.fixed_point_cap < 1 {
            return bad("fixed-point cap must be at least 1");
        }
        if !(self.gamma >= 0.0 && self.lambda >= 0.0) {
            return bad("gamma and lambda must be non-negative");
        }
        Ok(())
    }

    fn elites(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).ceil() as usize).clamp(1, self.population)
    }
}

/// Robot task plus the sorted human tasks it overlaps.
pub type MemoryKey = (TaskId, Vec<TaskId>);

/// Trajectories sampled during one cycle, keyed by task and overlap set.
#[derive(Debug, Default, Clone)]
pub struct TrajectoryMemory {
    map: BTreeMap<MemoryKey, Arc<Trajectory>>,
    pub hits: usize,
    pub misses: usize,
}

impl TrajectoryMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &MemoryKey) -> Option<&Arc<Trajectory>> {
        self.map.get(key)
    }

    fn fetch_or_sample(
        &mut self,
        task: TaskId,
        overlap: &BTreeSet<TaskId>,
        spatial: &SpatialModel,
        policy: &dyn MotionPolicy,
        gamma: f64,
        rng: &mut SimRng,
    ) -> Result<Arc<Trajectory>> {
        let key = (task, overlap.iter().copied().collect::<Vec<_>>());
        if let Some(t) = self.map.get(&key) {
            self.hits += 1;
            return Ok(t.clone());
        }
        self.misses += 1;
        let fields: Vec<&SpatialCostField> =
            overlap.iter().filter_map(|i| spatial.fields.get(i)).collect();
        let traj = Arc::new(policy.sample(task, &fields, gamma, rng)?);
        self.map.insert(key, traj.clone());
        Ok(traj)
    }
}

/// Everything a schedule evaluation reads.
pub struct Problem<'a> {
    pub task_set: &'a TaskSet,
    pub temporal: &'a TemporalModel,
    pub spatial: &'a SpatialModel,
    pub policy: &'a dyn MotionPolicy,
    /// Robot durations used before any trajectory is chosen, by task id.
    pub robot_durations_init: &'a [f64],
    pub history: &'a AllocationHistory,
}

/// Priority seeding: tasks ordered by successor depth (deepest first, random
/// tie order), agents assigned at random. The first seed assigns each task
/// greedily to the agent that would finish it earliest.
pub fn edf_seed(
    task_set: &TaskSet,
    temporal: &TemporalModel,
    robot_durations_init: &[f64],
    count: usize,
    rng: &mut SimRng,
) -> Result<Vec<ScheduleGenome>> {
    let n = task_set.len();
    let depth = task_set.successor_depth();
    let human_means = temporal.means(n)?;
    let mut seeds = Vec::with_capacity(count);
    for k in 0..count {
        let mut order: Vec<TaskId> = task_set.ids().collect();
        order.shuffle(rng);
        order.sort_by_key(|t| std::cmp::Reverse(depth[t.0]));
        let mut g = ScheduleGenome::default();
        let mut finish = vec![0.0f64; n];
        let mut free = [0.0f64; 2];
        for t in order {
            let ready = task_set
                .predecessors(t)
                .iter()
                .map(|p| finish[p.0])
                .fold(0.0, f64::max);
            let agent = if k == 0 {
                let h = free[0].max(ready) + human_means[t.0];
                let r = free[1].max(ready) + robot_durations_init[t.0];
                if h < r {
                    Agent::Human
                } else {
                    Agent::Robot
                }
            } else if rng.random_bool(0.5) {
                Agent::Human
            } else {
                Agent::Robot
            };
            let d = match agent {
                Agent::Human => human_means[t.0],
                Agent::Robot => robot_durations_init[t.0],
            };
            let a = agent.index();
            finish[t.0] = free[a].max(ready) + d;
            free[a] = finish[t.0];
            g.seq_mut(agent).push(Step::Do(t));
        }
        seeds.push(g);
    }
    Ok(seeds)
}

/// Human tasks whose half-open execution interval intersects each robot
/// task's interval. Every robot task is present as a key.
pub fn compute_overlaps(
    genome: &ScheduleGenome,
    task_set: &TaskSet,
    human: &[f64],
    robot: &[f64],
) -> Result<Overlaps> {
    let tl = simulate_timeline(genome, task_set, human, robot)?;
    let mut out = Overlaps::new();
    for j in genome.tasks_of(Agent::Robot) {
        let (sj, fj) = tl.interval(j);
        let set = genome
            .tasks_of(Agent::Human)
            .filter(|&i| {
                let (si, fi) = tl.interval(i);
                si < fj && sj < fi
            })
            .collect();
        out.insert(j, set);
    }
    Ok(out)
}

/// Mean makespan over `samples` human-duration draws.
pub fn monte_carlo_makespan(
    genome: &ScheduleGenome,
    task_set: &TaskSet,
    temporal: &TemporalModel,
    robot: &[f64],
    samples: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let n = task_set.len();
    let sampler = temporal.sampler(n)?;
    let human_tasks: Vec<TaskId> = genome.tasks_of(Agent::Human).collect();
    let mut human = sampler_means(&sampler, n);
    let (mut start, mut finish) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut total = 0.0;
    for _ in 0..samples {
        sampler.fill(&human_tasks, &mut human, rng);
        total += makespan_unchecked(genome, task_set, &human, robot, &mut start, &mut finish)
            .ok_or(Error::Deadlock { remaining: 0 })?;
    }
    Ok(total / samples as f64)
}

fn sampler_means(sampler: &crate::temporal::DurationSampler, n: usize) -> Vec<f64> {
    (0..n).map(|i| sampler.mean(TaskId(i))).collect()
}

/// `Σ_j max_{i ∈ C_j} S_i(ξ_j)` with an empty overlap contributing 0.
pub fn spatial_cost(
    trajectories: &BTreeMap<TaskId, Trajectory>,
    overlaps: &Overlaps,
    spatial: &SpatialModel,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, traj) in trajectories {
        let mut worst = 0.0f64;
        for i in overlaps.get(j).into_iter().flatten() {
            if let Some(f) = spatial.fields.get(i) {
                worst = worst.max(f.trajectory_cost(traj)?);
            }
        }
        total += worst;
    }
    Ok(total)
}

/// Score one genome: choose robot trajectories for its overlap sets until
/// the sets stop changing, estimate the makespan, and combine the costs.
pub fn evaluate(
    genome: &ScheduleGenome,
    problem: &Problem,
    memory: &mut TrajectoryMemory,
    config: &GaConfig,
    rng: &mut SimRng,
) -> Result<PlanResult> {
    let task_set = problem.task_set;
    if !check_feasible(genome, task_set) {
        return Ok(PlanResult::infeasible(genome.clone(), config.gamma, config.lambda));
    }
    let n = task_set.len();
    let human_means = problem.temporal.means(n)?;
    let mut robot = problem.robot_durations_init.to_vec();
    let mut overlaps = compute_overlaps(genome, task_set, &human_means, &robot)?;
    let mut trajectories = BTreeMap::new();
    let mut makespan = f64::NAN;
    let mut capped = true;
    let mut used = overlaps.clone();
    for _ in 0..config.fixed_point_cap {
        trajectories.clear();
        used = overlaps.clone();
        for (&j, set) in &overlaps {
            let traj = memory.fetch_or_sample(j, set, problem.spatial, problem.policy, config.gamma, rng)?;
            robot[j.0] = traj.duration();
            trajectories.insert(j, (*traj).clone());
        }
        makespan = monte_carlo_makespan(genome, task_set, problem.temporal, &robot, config.samples, rng)?;
        let next = compute_overlaps(genome, task_set, &human_means, &robot)?;
        if next == overlaps {
            capped = false;
            break;
        }
        overlaps = next;
    }
    // on a cap, keep the sets the trajectories were chosen for
    let overlaps = used;
    let z_s = spatial_cost(&trajectories, &overlaps, problem.spatial)?;
    let z_d = diversity_cost(genome, problem.history);
    Ok(PlanResult {
        genome: genome.clone(),
        robot_trajectories: trajectories,
        cost: PlanResult::combine(makespan, z_s, z_d, config.gamma, config.lambda),
        makespan_cost: makespan,
        spatial_cost: z_s,
        diversity_cost: z_d,
        gamma: config.gamma,
        lambda: config.lambda,
        overlaps,
        feasible: true,
        fixed_point_capped: capped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    #[serde(with = "crate::domain::finite_or_null")]
    pub best_cost: f64,
    #[serde(with = "crate::domain::finite_or_null")]
    pub population_best: f64,
    pub feasible: usize,
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub best: PlanResult,
    pub trace: Vec<GenerationStats>,
    pub evaluations: usize,
    pub memory_hits: usize,
    pub memory_misses: usize,
}

/// Evolve schedules from EDF seeds and return the best plan seen.
pub fn optimize(problem: &Problem, config: &GaConfig, rng: &mut SimRng) -> Result<Optimized> {
    config.validate()?;
    let n = problem.task_set.len();
    let mut memory = TrajectoryMemory::new();
    let mut scored: BTreeMap<ScheduleGenome, PlanResult> = BTreeMap::new();
    let mut evaluations = 0;
    let mut score = |g: &ScheduleGenome, memory: &mut TrajectoryMemory, rng: &mut SimRng| -> Result<f64> {
        if let Some(r) = scored.get(g) {
            return Ok(r.cost);
        }
        evaluations += 1;
        let r = evaluate(g, problem, memory, config, rng)?;
        let c = r.cost;
        scored.insert(g.clone(), r);
        Ok(c)
    };

    let seeds = edf_seed(
        problem.task_set,
        problem.temporal,
        problem.robot_durations_init,
        config.population,
        rng,
    )?;
    let mut population: Vec<(f64, ScheduleGenome)> = Vec::with_capacity(config.population);
    for g in seeds {
        let c = score(&g, &mut memory, rng)?;
        population.push((c, g));
    }
    let rank = |pop: &mut Vec<(f64, ScheduleGenome)>| {
        pop.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    };
    rank(&mut population);
    let mut best = population[0].clone();
    let mut trace = vec![GenerationStats {
        generation: 0,
        best_cost: best.0,
        population_best: best.0,
        feasible: population.iter().filter(|p| p.0.is_finite()).count(),
    }];
    let elites = config.elites();
    for generation in 1..=config.generations {
        population.truncate(elites);
        while population.len() < config.population {
            let parent = &population[rng.random_range(0..elites)].1;
            let (_, child) = mutate(parent, &config.mutation_weights, n, rng);
            let c = score(&child, &mut memory, rng)?;
            population.push((c, child));
        }
        rank(&mut population);
        if population[0].0 < best.0 {
            best = population[0].clone();
        }
        trace.push(GenerationStats {
            generation,
            best_cost: best.0,
            population_best: population[0].0,
            feasible: population.iter().filter(|p| p.0.is_finite()).count(),
        });
    }
    drop(score);
    let best = scored.remove(&best.1).expect("best genome was scored");
    Ok(Optimized {
        best,
        trace,
        evaluations,
        memory_hits: memory.hits,
        memory_misses: memory.misses,
    })
}
