use super::{argmin_key, steering_active, steering_key, MotionContext, MotionPolicy};
use crate::domain::{TaskId, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::spatial::SpatialCostField;
use crate::SimRng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const JITTER_RETRIES: usize = 8;

/// Best-of-N selection over stored demonstration paths.
///
/// `candidates == 0` scores every stored path without jitter, which makes
/// sampling deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryPolicy {
    pub context: MotionContext,
    pub paths: BTreeMap<TaskId, Vec<Vec<Point>>>,
    pub jitter: f64,
    pub candidates: usize,
}

impl LibraryPolicy {
    pub fn new(
        context: MotionContext,
        demos: &BTreeMap<TaskId, Vec<Trajectory>>,
        jitter: f64,
        candidates: usize,
    ) -> Self {
        let paths = demos
            .iter()
            .map(|(task, list)| {
                (
                    *task,
                    list.iter().map(|t| t.active_points().to_vec()).collect(),
                )
            })
            .collect();
        Self {
            context,
            paths,
            jitter,
            candidates,
        }
    }

    fn bank(&self, task: TaskId) -> Result<&[Vec<Point>]> {
        match self.paths.get(&task) {
            Some(list) if !list.is_empty() => Ok(list),
            _ => Err(Error::UnknownTask(task)),
        }
    }

    /// A stored path perturbed by smooth noise that vanishes at both ends.
    fn draw(&self, task: TaskId, rng: &mut SimRng) -> Result<Trajectory> {
        let bank = self.bank(task)?;
        let base = &bank[rng.random_range(0..bank.len())];
        if self.jitter > 0.0 && base.len() > 2 {
            for _ in 0..JITTER_RETRIES {
                let dx: f64 = rng.sample::<f64, _>(StandardNormal) * self.jitter;
                let dy: f64 = rng.sample::<f64, _>(StandardNormal) * self.jitter;
                let last = (base.len() - 1) as f64;
                let path: Vec<Point> = base
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let w = (std::f64::consts::PI * i as f64 / last).sin();
                        Point::new(p.x + w * dx, p.y + w * dy)
                    })
                    .collect();
                let traj = self.context.trajectory_from_path(task, &path)?;
                if !self.context.collides(&traj) {
                    return Ok(traj);
                }
            }
        }
        self.context.trajectory_from_path(task, base)
    }
}

impl MotionPolicy for LibraryPolicy {
    fn context(&self) -> &MotionContext {
        &self.context
    }

    fn sample(
        &self,
        task: TaskId,
        fields: &[&SpatialCostField],
        gamma: f64,
        rng: &mut SimRng,
    ) -> Result<Trajectory> {
        let candidates: Vec<Trajectory> = if self.candidates == 0 {
            self.bank(task)?
                .iter()
                .map(|p| self.context.trajectory_from_path(task, p))
                .collect::<Result<_>>()?
        } else if steering_active(fields, gamma) {
            (0..self.candidates)
                .map(|_| self.draw(task, rng))
                .collect::<Result<_>>()?
        } else {
            return self.draw(task, rng);
        };
        let keys: Vec<(bool, f64)> = candidates
            .iter()
            .map(|t| steering_key(&self.context, t, fields, gamma))
            .collect();
        Ok(candidates.into_iter().nth(argmin_key(&keys)).unwrap())
    }
}
