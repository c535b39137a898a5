//! Robot motion generation steered by the efficiency/proximity value.
//!
//! Two policies share the [`MotionPolicy`] contract:
//!
//! - [`DiffusionPolicy`]: a task-conditioned denoising diffusion model over
//!   coarse trajectory knots, steered at sampling time by best-of-N selection
//!   on a few-stride deterministic lookahead of each candidate.
//! - [`LibraryPolicy`]: best-of-N over a bank of demonstrations; used as a
//!   deterministic oracle and as a fallback.
//!
//! Steering is active only when there is something to steer against: with
//! `gamma == 0` or no concurrent fields the policies sample unconditionally.

mod diffusion;
mod library;
pub mod mlp;

pub use diffusion::{DiffusionPolicy, LossRecord, NoiseSchedule, TrainConfig, POLICY_ARTIFACT_VERSION};
pub use library::LibraryPolicy;

use crate::domain::{TaskId, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{path_crosses, Point, Rect, Segment};
use crate::spatial::SpatialCostField;
use crate::SimRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Everything a policy needs to turn a path into a valid [`Trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionContext {
    pub bounds: Rect,
    pub walls: Vec<Segment>,
    /// Robot start position for every task.
    pub start: Point,
    pub goals: BTreeMap<TaskId, Point>,
    /// Arc length travelled per trajectory step.
    pub step: f64,
    /// Fixed trajectory length.
    pub len: usize,
    /// Seconds of task time per step.
    pub dt: f64,
    /// Distance to the goal that counts as completion.
    pub goal_tolerance: f64,
}

impl MotionContext {
    pub fn goal(&self, task: TaskId) -> Result<Point> {
        self.goals.get(&task).copied().ok_or(Error::UnknownTask(task))
    }

    /// Clip a path to the workspace and convert it to a trajectory.
    pub fn trajectory_from_path(&self, task: TaskId, path: &[Point]) -> Result<Trajectory> {
        let goal = self.goal(task)?;
        let clipped: Vec<Point> = path.iter().map(|&p| self.bounds.clamp(p)).collect();
        Trajectory::from_path(&clipped, self.step, self.len, self.dt, goal, self.goal_tolerance)
    }

    pub fn collides(&self, traj: &Trajectory) -> bool {
        path_crosses(traj.active_points(), &self.walls)
    }
}

/// `duration + gamma * max_i S_i(traj)`; an empty field set contributes 0.
pub fn value(traj: &Trajectory, fields: &[&SpatialCostField], gamma: f64) -> f64 {
    let proximity = fields
        .iter()
        .map(|f| f.path_cost(&traj.points).unwrap_or(0.0))
        .fold(0.0, f64::max);
    traj.duration() + gamma * proximity
}

/// Value used during steering: colliding candidates are never preferred.
pub fn steering_value(
    ctx: &MotionContext,
    traj: &Trajectory,
    fields: &[&SpatialCostField],
    gamma: f64,
) -> f64 {
    if ctx.collides(traj) {
        f64::INFINITY
    } else {
        value(traj, fields, gamma)
    }
}

/// Ranking key used to compare candidates: any collision-free candidate
/// beats every colliding one, and ties within either group fall back to the
/// value. Early in denoising every clean estimate may clip a wall, so the
/// value must still discriminate among them.
pub(crate) fn steering_key(
    ctx: &MotionContext,
    traj: &Trajectory,
    fields: &[&SpatialCostField],
    gamma: f64,
) -> (bool, f64) {
    (ctx.collides(traj), value(traj, fields, gamma))
}

/// Index of the smallest key; ties resolve to the earliest index.
pub(crate) fn argmin_key(keys: &[(bool, f64)]) -> usize {
    let mut best = 0;
    for (i, k) in keys.iter().enumerate() {
        let b = keys[best];
        if k.0 < b.0 || (k.0 == b.0 && k.1 < b.1) {
            best = i;
        }
    }
    best
}

/// True when the value function has a proximity term to steer against.
pub fn steering_active(fields: &[&SpatialCostField], gamma: f64) -> bool {
    gamma != 0.0 && !fields.is_empty()
}

pub trait MotionPolicy: Send + Sync {
    fn context(&self) -> &MotionContext;

    /// Sample a trajectory for `task`, steered against the concurrent fields.
    fn sample(
        &self,
        task: TaskId,
        fields: &[&SpatialCostField],
        gamma: f64,
        rng: &mut SimRng,
    ) -> Result<Trajectory>;

    fn sample_unsteered(&self, task: TaskId, rng: &mut SimRng) -> Result<Trajectory> {
        self.sample(task, &[], 0.0, rng)
    }

    /// Mean unsteered duration per task over `draws` samples, indexed by task id.
    fn initial_durations(&self, n_tasks: usize, draws: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        (0..n_tasks)
            .map(|i| {
                let mut total = 0.0;
                for _ in 0..draws {
                    total += self.sample_unsteered(TaskId(i), rng)?.duration();
                }
                Ok(total / draws as f64)
            })
            .collect()
    }
}
