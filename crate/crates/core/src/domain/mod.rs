//! Shared domain types: tasks, agents, schedule genomes, trajectories.

pub(crate) mod timeline;

pub use timeline::{check_feasible, simulate_timeline, TaskTimes, TimelineResult};

use crate::error::{Error, Result};
use crate::geometry::{resample_by_step, Point};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// Dense task index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Default)]
#[serde(transparent)]
pub struct TaskId(pub usize);

// Accepts numeric strings too: JSON object keys arrive as strings when they
// pass through serde's buffered content (internally tagged enums).
impl<'de> Deserialize<'de> for TaskId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = TaskId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a task id")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<TaskId, E> {
                usize::try_from(v).map(TaskId).map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<TaskId, E> {
                usize::try_from(v).map(TaskId).map_err(E::custom)
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<TaskId, E> {
                v.parse().map(TaskId).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Human,
    Robot,
}

impl Agent {
    pub const ALL: [Agent; 2] = [Agent::Human, Agent::Robot];

    pub fn other(self) -> Agent {
        match self {
            Agent::Human => Agent::Robot,
            Agent::Robot => Agent::Human,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Agent::Human => 0,
            Agent::Robot => 1,
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Human => f.write_str("human"),
            Agent::Robot => f.write_str("robot"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    /// Goal location in workspace coordinates.
    pub goal: Point,
}

/// Tasks plus a precedence relation. `(i, j)` means τi finishes before τj starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskSetRepr", into = "TaskSetRepr")]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
    precedence: BTreeSet<(TaskId, TaskId)>,
    preds: Vec<Vec<TaskId>>,
}

#[derive(Serialize, Deserialize)]
struct TaskSetRepr {
    tasks: Vec<TaskSpec>,
    precedence: Vec<(TaskId, TaskId)>,
}

impl TryFrom<TaskSetRepr> for TaskSet {
    type Error = Error;
    fn try_from(r: TaskSetRepr) -> Result<Self> {
        TaskSet::new(r.tasks, r.precedence)
    }
}

impl From<TaskSet> for TaskSetRepr {
    fn from(t: TaskSet) -> Self {
        TaskSetRepr {
            tasks: t.tasks,
            precedence: t.precedence.into_iter().collect(),
        }
    }
}

impl TaskSet {
    pub fn new(
        mut tasks: Vec<TaskSpec>,
        precedence: impl IntoIterator<Item = (TaskId, TaskId)>,
    ) -> Result<Self> {
        tasks.sort_by_key(|t| t.id);
        for (k, t) in tasks.iter().enumerate() {
            if t.id.0 != k {
                return Err(Error::InvalidTaskSet(format!(
                    "task ids must be dense from 0, found {} at position {k}",
                    t.id
                )));
            }
        }
        let n = tasks.len();
        let precedence: BTreeSet<_> = precedence.into_iter().collect();
        let mut preds = vec![Vec::new(); n];
        for &(i, j) in &precedence {
            if i.0 >= n || j.0 >= n {
                return Err(Error::InvalidTaskSet(format!(
                    "precedence ({i}, {j}) references an unknown task"
                )));
            }
            if i == j {
                return Err(Error::InvalidTaskSet(format!("self precedence on {i}")));
            }
            preds[j.0].push(i);
        }
        let set = TaskSet {
            tasks,
            precedence,
            preds,
        };
        if set.topological_order().is_none() {
            return Err(Error::InvalidTaskSet("precedence relation is cyclic".into()));
        }
        Ok(set)
    }

    /// Tasks with goals at the origin; handy for pure scheduling instances.
    pub fn without_goals(n: usize, precedence: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let tasks = (0..n)
            .map(|i| TaskSpec {
                id: TaskId(i),
                goal: Point::default(),
            })
            .collect();
        Self::new(
            tasks,
            precedence.into_iter().map(|(i, j)| (TaskId(i), TaskId(j))),
        )
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks.iter().map(|t| t.id)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn goal(&self, id: TaskId) -> Point {
        self.tasks[id.0].goal
    }

    pub fn precedence(&self) -> &BTreeSet<(TaskId, TaskId)> {
        &self.precedence
    }

    pub fn predecessors(&self, id: TaskId) -> &[TaskId] {
        &self.preds[id.0]
    }

    fn topological_order(&self) -> Option<Vec<TaskId>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(TaskId(i));
            for &(a, b) in &self.precedence {
                if a.0 == i {
                    indeg[b.0] -= 1;
                    if indeg[b.0] == 0 {
                        ready.push(b.0);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Length (in tasks) of the longest successor chain starting at each task.
    pub fn successor_depth(&self) -> Vec<usize> {
        let order = self.topological_order().expect("validated acyclic");
        let mut depth = vec![0usize; self.len()];
        for &t in order.iter().rev() {
            for &(a, b) in &self.precedence {
                if a == t {
                    depth[t.0] = depth[t.0].max(depth[b.0] + 1);
                }
            }
        }
        depth
    }
}

/// One entry in an agent's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    /// Execute the task.
    Do(TaskId),
    /// Idle until the task (held by the other agent) has finished.
    Wait(TaskId),
}

impl Step {
    pub fn task(self) -> TaskId {
        match self {
            Step::Do(t) | Step::Wait(t) => t,
        }
    }

    pub fn is_wait(self) -> bool {
        matches!(self, Step::Wait(_))
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Do(t) => write!(f, "{}", t.0),
            Step::Wait(t) => write!(f, "w{}", t.0),
        }
    }
}

/// Per-agent ordered step sequences.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct ScheduleGenome {
    pub human: Vec<Step>,
    pub robot: Vec<Step>,
}

impl ScheduleGenome {
    pub fn new(human: Vec<Step>, robot: Vec<Step>) -> Self {
        Self { human, robot }
    }

    /// Build from task index lists with no waits.
    pub fn from_tasks(human: &[usize], robot: &[usize]) -> Self {
        Self {
            human: human.iter().map(|&i| Step::Do(TaskId(i))).collect(),
            robot: robot.iter().map(|&i| Step::Do(TaskId(i))).collect(),
        }
    }

    pub fn seq(&self, agent: Agent) -> &[Step] {
        match agent {
            Agent::Human => &self.human,
            Agent::Robot => &self.robot,
        }
    }

    pub fn seq_mut(&mut self, agent: Agent) -> &mut Vec<Step> {
        match agent {
            Agent::Human => &mut self.human,
            Agent::Robot => &mut self.robot,
        }
    }

    pub fn tasks_of(&self, agent: Agent) -> impl Iterator<Item = TaskId> + '_ {
        self.seq(agent).iter().filter_map(|s| match s {
            Step::Do(t) => Some(*t),
            Step::Wait(_) => None,
        })
    }

    /// Which agent executes `task`, if any.
    pub fn agent_of(&self, task: TaskId) -> Option<Agent> {
        Agent::ALL
            .into_iter()
            .find(|&a| self.seq(a).contains(&Step::Do(task)))
    }

    pub fn wait_count(&self) -> usize {
        self.human.iter().chain(&self.robot).filter(|s| s.is_wait()).count()
    }

    /// Check the structural invariants against `n_tasks` tasks.
    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        let mut seen = vec![0usize; n_tasks];
        for agent in Agent::ALL {
            let seq = self.seq(agent);
            for (pos, step) in seq.iter().enumerate() {
                let t = step.task();
                if t.0 >= n_tasks {
                    return Err(Error::InvalidGenome(format!("unknown task {t}")));
                }
                match step {
                    Step::Do(_) => seen[t.0] += 1,
                    Step::Wait(_) => {
                        if seq.contains(&Step::Do(t)) {
                            return Err(Error::InvalidGenome(format!(
                                "{agent} waits on its own task {t}"
                            )));
                        }
                        if pos + 1 == seq.len() {
                            return Err(Error::InvalidGenome(format!(
                                "{agent} sequence ends with a wait on {t}"
                            )));
                        }
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(Error::InvalidGenome(format!(
                "task t{i} assigned {} times",
                seen[i]
            )));
        }
        Ok(())
    }

    /// Apply the two wait repair rules: drop waits co-located with their
    /// target task and drop trailing waits.
    pub fn repair(&mut self) {
        for agent in Agent::ALL {
            let own: BTreeSet<TaskId> = self.tasks_of(agent).collect();
            let seq = self.seq_mut(agent);
            seq.retain(|s| !matches!(s, Step::Wait(t) if own.contains(t)));
            while matches!(seq.last(), Some(Step::Wait(_))) {
                seq.pop();
            }
        }
    }
}

impl fmt::Display for ScheduleGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &[Step]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "h[{}] r[{}]", join(&self.human), join(&self.robot))
    }
}

/// Fixed-length point sequence with the step at which the task is achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point>,
    pub completion_index: usize,
    /// Seconds of task time per step.
    pub dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point>, completion_index: usize, dt: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if completion_index >= points.len() || !(dt >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "completion index {completion_index} out of range for {} points",
                points.len()
            )));
        }
        Ok(Self {
            points,
            completion_index,
            dt,
        })
    }

    /// Resample `path` at `step` spacing into exactly `len` points (padding
    /// with the final point) and mark completion at the first point within
    /// `tolerance` of `goal`, or the last index if the goal is never reached.
    pub fn from_path(
        path: &[Point],
        step: f64,
        len: usize,
        dt: f64,
        goal: Point,
        tolerance: f64,
    ) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        let mut points = resample_by_step(path, step, len);
        let last = *points.last().unwrap();
        points.resize(len, last);
        let completion_index = first_within(&points, goal, tolerance).unwrap_or(len - 1);
        Trajectory::new(points, completion_index, dt)
    }

    pub fn duration(&self) -> f64 {
        self.completion_index as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points up to and including the completion step.
    pub fn active_points(&self) -> &[Point] {
        &self.points[..=self.completion_index]
    }

    pub fn reaches(&self, goal: Point, tolerance: f64) -> bool {
        self.points[self.completion_index].dist(goal) <= tolerance
    }
}

pub fn first_within(points: &[Point], goal: Point, tolerance: f64) -> Option<usize> {
    points.iter().position(|p| p.dist(goal) <= tolerance)
}

/// Per-task counts of prior cycles in which each agent executed the task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationHistory {
    /// `counts[i] = [human, robot]`.
    pub counts: Vec<[u32; 2]>,
    pub cycles: u32,
}

impl AllocationHistory {
    pub fn new(n_tasks: usize) -> Self {
        Self {
            counts: vec![[0, 0]; n_tasks],
            cycles: 0,
        }
    }

    pub fn record(&mut self, genome: &ScheduleGenome) {
        for agent in Agent::ALL {
            for t in genome.tasks_of(agent) {
                self.counts[t.0][agent.index()] += 1;
            }
        }
        self.cycles += 1;
    }

    pub fn count(&self, task: TaskId, agent: Agent) -> u32 {
        self.counts[task.0][agent.index()]
    }
}

/// Diversity cost: mean absolute deviation of per-task agent counts from the
/// balanced allocation, counting the candidate genome's own assignment.
pub fn diversity_cost(genome: &ScheduleGenome, history: &AllocationHistory) -> f64 {
    let n = history.counts.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, c) in history.counts.iter().enumerate() {
        let mut counts = [c[0] as f64, c[1] as f64];
        if let Some(a) = genome.agent_of(TaskId(i)) {
            counts[a.index()] += 1.0;
        }
        let half_sum = 0.5 * (counts[0] + counts[1]);
        total += counts.iter().map(|r| (half_sum - r).abs()).sum::<f64>();
    }
    total / (2.0 * n as f64)
}

/// Robot task → human tasks expected to run concurrently.
pub type Overlaps = BTreeMap<TaskId, BTreeSet<TaskId>>;

/// An evaluated schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub genome: ScheduleGenome,
    pub robot_trajectories: BTreeMap<TaskId, Trajectory>,
    /// Total cost; `f64::INFINITY` when infeasible (serialized as null).
    #[serde(with = "finite_or_null")]
    pub cost: f64,
    #[serde(with = "finite_or_null")]
    pub makespan_cost: f64,
    pub spatial_cost: f64,
    pub diversity_cost: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub overlaps: Overlaps,
    pub feasible: bool,
    /// The overlap fixed point hit its iteration cap.
    pub fixed_point_capped: bool,
}

impl PlanResult {
    pub fn infeasible(genome: ScheduleGenome, gamma: f64, lambda: f64) -> Self {
        Self {
            genome,
            robot_trajectories: BTreeMap::new(),
            cost: f64::INFINITY,
            makespan_cost: f64::INFINITY,
            spatial_cost: 0.0,
            diversity_cost: 0.0,
            gamma,
            lambda,
            overlaps: Overlaps::new(),
            feasible: false,
            fixed_point_capped: false,
        }
    }

    /// `z_t + γ z_s + λ z_d`.
    pub fn combine(makespan: f64, spatial: f64, diversity: f64, gamma: f64, lambda: f64) -> f64 {
        makespan + gamma * spatial + lambda * diversity
    }
}

pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
