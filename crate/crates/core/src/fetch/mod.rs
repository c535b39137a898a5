//! The 2D fetch world: four objects behind two rows of walls, collected by a
//! human and a robot from their home zones.

mod deploy;

pub use deploy::{
    deploy_archetype, deploy_live, robot_state, round_trip_position, CycleObservation, RobotState, TaskRecord,
};

use crate::domain::{Agent, TaskId, TaskSet, TaskSpec, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{path_crosses, path_length, resample_uniform, Circle, Point, Rect, Segment};
use crate::motion::MotionContext;
use crate::spatial::{GridSpec, SpatialCostField, SpatialModel, SpatialParams};
use crate::temporal::{NigParams, TemporalModel};
use crate::SimRng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

const JITTER_RETRIES: usize = 32;
/// Points per recorded human path.
pub const HUMAN_TRAJECTORY_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homes {
    pub human: Circle,
    pub robot: Circle,
}

/// A waypoint route for one agent and task; the path runs home, waypoints,
/// object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub agent: Agent,
    pub task: TaskId,
    pub mode: String,
    pub waypoints: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpeeds {
    pub fast: f64,
    pub slow: f64,
    /// Speed assumed by the prior duration model.
    pub nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Arc length per trajectory step.
    pub step: f64,
    pub len: usize,
    pub goal_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub bounds: Rect,
    pub walls: Vec<Segment>,
    /// Indexed by task id.
    pub objects: Vec<Circle>,
    pub homes: Homes,
    pub precedence: Vec<(TaskId, TaskId)>,
    pub regions: BTreeMap<String, Rect>,
    pub routes: Vec<Route>,
    pub robot_speed: f64,
    pub human_speeds: HumanSpeeds,
    pub motion: MotionSpec,
    /// Waypoint jitter standard deviation.
    pub jitter: f64,
    /// Relative standard deviation of human task durations.
    pub duration_noise: f64,
}

impl WorldSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let w: WorldSpec = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The checked-in canonical world.
    pub fn canonical() -> Self {
        Self::from_json(include_str!("../../../../assets/fetch_world.json")).expect("bundled world is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.task_set()?;
        if self.robot_speed <= 0.0 || self.human_speeds.fast <= 0.0 || self.human_speeds.slow <= 0.0 {
            return Err(Error::InvalidConfig("speeds must be positive".into()));
        }
        for agent in Agent::ALL {
            for task in 0..self.objects.len() {
                let task = TaskId(task);
                let modes = self.routes_for(agent, task);
                if modes.is_empty() {
                    return Err(Error::InvalidConfig(format!("no {agent} route for {task}")));
                }
                for r in modes {
                    let path = self.route_path(r);
                    if path_crosses(&path, &self.walls) {
                        return Err(Error::InvalidConfig(format!(
                            "{agent} route {} for {task} crosses a wall",
                            r.mode
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn task_set(&self) -> Result<TaskSet> {
        let tasks = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, c)| TaskSpec {
                id: TaskId(i),
                goal: c.center,
            })
            .collect();
        TaskSet::new(tasks, self.precedence.iter().copied())
    }

    pub fn home(&self, agent: Agent) -> &Circle {
        match agent {
            Agent::Human => &self.homes.human,
            Agent::Robot => &self.homes.robot,
        }
    }

    pub fn goal(&self, task: TaskId) -> Point {
        self.objects[task.0].center
    }

    pub fn routes_for(&self, agent: Agent, task: TaskId) -> Vec<&Route> {
        self.routes
            .iter()
            .filter(|r| r.agent == agent && r.task == task)
            .collect()
    }

    pub fn route(&self, agent: Agent, task: TaskId, mode: &str) -> Option<&Route> {
        self.routes
            .iter()
            .find(|r| r.agent == agent && r.task == task && r.mode == mode)
    }

    pub fn route_path(&self, route: &Route) -> Vec<Point> {
        let mut path = Vec::with_capacity(route.waypoints.len() + 2);
        path.push(self.home(route.agent).center);
        path.extend(&route.waypoints);
        path.push(self.goal(route.task));
        path
    }

    /// Route path with interior waypoints perturbed; falls back to the
    /// nominal route if no collision-free perturbation is found.
    pub fn jittered_path(&self, route: &Route, rng: &mut SimRng) -> Vec<Point> {
        let nominal = self.route_path(route);
        if self.jitter <= 0.0 {
            return nominal;
        }
        for _ in 0..JITTER_RETRIES {
            let mut path = nominal.clone();
            let last = path.len() - 1;
            for p in &mut path[1..last] {
                p.x += rng.sample::<f64, _>(StandardNormal) * self.jitter;
                p.y += rng.sample::<f64, _>(StandardNormal) * self.jitter;
                *p = self.bounds.clamp(*p);
            }
            if !path_crosses(&path, &self.walls) {
                return path;
            }
        }
        nominal
    }

    pub fn robot_dt(&self) -> f64 {
        // one step out and one back per trajectory step
        2.0 * self.motion.step / self.robot_speed
    }

    pub fn motion_context(&self) -> MotionContext {
        MotionContext {
            bounds: self.bounds,
            walls: self.walls.clone(),
            start: self.homes.robot.center,
            goals: self
                .objects
                .iter()
                .enumerate()
                .map(|(i, c)| (TaskId(i), c.center))
                .collect(),
            step: self.motion.step,
            len: self.motion.len,
            dt: self.robot_dt(),
            goal_tolerance: self.motion.goal_tolerance,
        }
    }

    /// Region whose name matches, if any.
    pub fn region(&self, name: &str) -> Option<&Rect> {
        self.regions.get(name)
    }

    /// Name of the first region a path passes through, in name order.
    pub fn classify(&self, path: &[Point], names: &[&str]) -> Option<String> {
        names
            .iter()
            .find(|n| {
                self.region(n)
                    .is_some_and(|r| path.iter().any(|p| r.contains(*p)))
            })
            .map(|n| n.to_string())
    }

    /// Round-trip duration prior per task from the nominal human speed.
    pub fn prior_temporal(&self, rel_sd: f64) -> Result<TemporalModel> {
        let mut tasks = BTreeMap::new();
        for i in 0..self.objects.len() {
            let routes = self.routes_for(Agent::Human, TaskId(i));
            let mean_len =
                routes.iter().map(|r| path_length(&self.route_path(r))).sum::<f64>() / routes.len() as f64;
            tasks.insert(
                TaskId(i),
                NigParams::weak(2.0 * mean_len / self.human_speeds.nominal, rel_sd)?,
            );
        }
        TemporalModel::new(tasks)
    }

    /// Nominal human route of every mode as a recorded trajectory.
    pub fn prior_human_trajectories(&self, task: TaskId) -> Result<Vec<Trajectory>> {
        self.routes_for(Agent::Human, task)
            .into_iter()
            .map(|r| {
                let path = self.route_path(r);
                let duration = 2.0 * path_length(&path) / self.human_speeds.nominal;
                human_trajectory(&path, duration)
            })
            .collect()
    }

    pub fn prior_spatial(&self, grid: GridSpec, params: SpatialParams) -> Result<SpatialModel> {
        let mut fields = BTreeMap::new();
        for i in 0..self.objects.len() {
            let task = TaskId(i);
            let priors = self.prior_human_trajectories(task)?;
            fields.insert(task, SpatialCostField::from_priors(task, &priors, grid, params)?);
        }
        Ok(SpatialModel { fields })
    }
}

/// Recorded human path: the outbound leg resampled to a fixed length.
pub fn human_trajectory(outbound: &[Point], duration: f64) -> Result<Trajectory> {
    if outbound.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let points = if outbound.len() == 1 {
        vec![outbound[0]; HUMAN_TRAJECTORY_LEN]
    } else {
        resample_uniform(outbound, HUMAN_TRAJECTORY_LEN)
    };
    let last = HUMAN_TRAJECTORY_LEN - 1;
    Trajectory::new(points, last, duration / last as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedClass {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteClass {
    Middle,
    Outside,
}

impl RouteClass {
    pub fn mode(self) -> &'static str {
        match self {
            RouteClass::Middle => "middle",
            RouteClass::Outside => "outside",
        }
    }
}

/// Scripted human: a speed class and a preferred route for the tasks that
/// offer a choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HumanArchetype {
    pub speed: SpeedClass,
    pub route: RouteClass,
}

impl HumanArchetype {
    pub const ALL: [HumanArchetype; 4] = [
        HumanArchetype { speed: SpeedClass::Fast, route: RouteClass::Middle },
        HumanArchetype { speed: SpeedClass::Fast, route: RouteClass::Outside },
        HumanArchetype { speed: SpeedClass::Slow, route: RouteClass::Middle },
        HumanArchetype { speed: SpeedClass::Slow, route: RouteClass::Outside },
    ];

    pub fn speed(&self, world: &WorldSpec) -> f64 {
        match self.speed {
            SpeedClass::Fast => world.human_speeds.fast,
            SpeedClass::Slow => world.human_speeds.slow,
        }
    }

    /// Route for `task`: the preferred mode when offered, otherwise the
    /// task's only route.
    pub fn route<'w>(&self, world: &'w WorldSpec, task: TaskId) -> Result<&'w Route> {
        world
            .route(Agent::Human, task, self.route.mode())
            .or_else(|| world.routes_for(Agent::Human, task).into_iter().next())
            .ok_or_else(|| Error::InvalidConfig(format!("no human route for {task}")))
    }

    /// Outbound path and round-trip duration of one execution of `task`.
    pub fn realize(&self, world: &WorldSpec, task: TaskId, rng: &mut SimRng) -> Result<(Vec<Point>, f64)> {
        let path = world.jittered_path(self.route(world, task)?, rng);
        let nominal = 2.0 * path_length(&path) / self.speed(world);
        let noise: f64 = rng.sample(StandardNormal);
        let factor = (1.0 + world.duration_noise * noise).max(0.5);
        Ok((path, nominal * factor))
    }
}

impl fmt::Display for HumanArchetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.speed {
            SpeedClass::Fast => "fast",
            SpeedClass::Slow => "slow",
        };
        write!(f, "{s}-{}", self.route.mode())
    }
}

impl FromStr for HumanArchetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HumanArchetype::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown archetype {s:?}")))
    }
}

/// Jittered robot demonstrations; tasks with several route modes cycle
/// through them so each mode gets an equal share.
pub fn generate_demonstrations(
    world: &WorldSpec,
    per_task: usize,
    rng: &mut SimRng,
) -> Result<BTreeMap<TaskId, Vec<Trajectory>>> {
    let ctx = world.motion_context();
    let mut out = BTreeMap::new();
    for i in 0..world.objects.len() {
        let task = TaskId(i);
        let routes = world.routes_for(Agent::Robot, task);
        let mut demos = Vec::with_capacity(per_task);
        for k in 0..per_task {
            let path = world.jittered_path(routes[k % routes.len()], rng);
            demos.push(ctx.trajectory_from_path(task, &path)?);
        }
        out.insert(task, demos);
    }
    Ok(out)
}

/// Ground-truth models of an archetype: duration moments from `draws`
/// simulated executions and spatial fields averaged over their paths.
pub fn reference_models(
    world: &WorldSpec,
    archetype: HumanArchetype,
    grid: GridSpec,
    params: SpatialParams,
    draws: usize,
    rng: &mut SimRng,
) -> Result<(TemporalModel, SpatialModel)> {
    let mut temporal = BTreeMap::new();
    let mut fields = BTreeMap::new();
    for i in 0..world.objects.len() {
        let task = TaskId(i);
        let mut durations = Vec::with_capacity(draws);
        let mut paths = Vec::with_capacity(draws);
        for _ in 0..draws {
            let (path, d) = archetype.realize(world, task, rng)?;
            paths.push(human_trajectory(&path, d)?);
            durations.push(d);
        }
        let n = durations.len() as f64;
        let mean = durations.iter().sum::<f64>() / n;
        let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        // alpha = 2 makes the variance estimate equal beta
        temporal.insert(task, NigParams::new(mean, n, 2.0, var.max(1e-9))?);
        fields.insert(task, SpatialCostField::from_priors(task, &paths, grid, params)?);
    }
    Ok((TemporalModel::new(temporal)?, SpatialModel { fields }))
}
