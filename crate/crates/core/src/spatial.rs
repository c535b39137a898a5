//! Learned proximity cost: a per-task grid of Gaussian beliefs over the
//! point cost of a robot position relative to the human's path for that task.

use crate::domain::{TaskId, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const MEAN_FLOOR: f64 = 1e-6;

/// Regular grid over the workspace bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn unit(nx: usize, ny: usize) -> Self {
        Self {
            bounds: Rect {
                min: Point::new(0.0, 0.0),
                max: Point::new(1.0, 1.0),
            },
            nx,
            ny,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn step(&self) -> (f64, f64) {
        (
            self.bounds.width() / (self.nx - 1) as f64,
            self.bounds.height() / (self.ny - 1) as f64,
        )
    }

    /// Row-major index, x fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        let (sx, sy) = self.step();
        Point::new(
            self.bounds.min.x + ix as f64 * sx,
            self.bounds.min.y + iy as f64 * sy,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| self.point(ix, iy)))
    }
}

/// Hyperparameters shared by all fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialParams {
    /// Distance decay of the point cost, per workspace unit.
    pub beta_s: f64,
    /// Observation (likelihood) variance.
    pub rho: f64,
    /// Prior variance when initialised from prior trajectories.
    pub rho0: f64,
    /// Prior variance when no prior trajectories exist.
    pub rho0_uninformed: f64,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            beta_s: 5.0,
            rho: 0.05,
            rho0: 0.05,
            rho0_uninformed: 0.25,
        }
    }
}

/// `max over x_h in path of exp(-beta * |x_h - x|)`.
pub fn trajectory_point_cost(x: Point, human: &[Point], beta_s: f64) -> Result<f64> {
    let min_d = human
        .iter()
        .map(|p| p.dist(x))
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyTrajectory)?;
    Ok((-beta_s * min_d).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCostField {
    pub task: TaskId,
    pub grid: GridSpec,
    pub params: SpatialParams,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of observations absorbed since initialisation.
    pub observations: u32,
}

impl SpatialCostField {
    /// Average point-cost field of the prior trajectories; uniform 0.5 with
    /// uninformed variance when there are none.
    pub fn from_priors(
        task: TaskId,
        priors: &[Trajectory],
        grid: GridSpec,
        params: SpatialParams,
    ) -> Result<Self> {
        if grid.nx < 2 || grid.ny < 2 {
            return Err(Error::InvalidConfig("grid needs at least 2x2 points".into()));
        }
        let (mean, var) = if priors.is_empty() {
            (
                vec![0.5; grid.len()],
                vec![params.rho0_uninformed; grid.len()],
            )
        } else {
            let mut mean = vec![0.0; grid.len()];
            for prior in priors {
                for (m, x) in mean.iter_mut().zip(grid.points()) {
                    *m += trajectory_point_cost(x, &prior.points, params.beta_s)?;
                }
            }
            let inv = 1.0 / priors.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
            (mean, vec![params.rho0; grid.len()])
        };
        Ok(Self {
            task,
            grid,
            params,
            mean,
            var,
            observations: 0,
        })
    }

    /// Per-point observed cost of a human trajectory.
    pub fn observation(&self, observed: &Trajectory) -> Result<Vec<f64>> {
        self.grid
            .points()
            .map(|x| trajectory_point_cost(x, &observed.points, self.params.beta_s))
            .collect()
    }

    /// Conjugate Gaussian update at every grid point with likelihood
    /// `N(s*, rho)`.
    pub fn bayes_update(&self, observed: &Trajectory) -> Result<Self> {
        let obs = self.observation(observed)?;
        let mut next = self.clone();
        next.absorb(&obs);
        Ok(next)
    }

    pub(crate) fn absorb(&mut self, obs: &[f64]) {
        let rho = self.params.rho;
        for ((m, v), o) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(obs) {
            let denom = rho + *v;
            *m = ((rho * *m + *v * o) / denom).clamp(MEAN_FLOOR, 1.0);
            *v = *v * rho / denom;
        }
        self.observations += 1;
    }

    /// Bilinear interpolation of the grid means; points outside the bounds
    /// are clamped onto them.
    pub fn query(&self, x: Point) -> f64 {
        let g = &self.grid;
        let p = g.bounds.clamp(x);
        let fx = (p.x - g.bounds.min.x) / g.bounds.width() * (g.nx - 1) as f64;
        let fy = (p.y - g.bounds.min.y) / g.bounds.height() * (g.ny - 1) as f64;
        let ix = (fx.floor() as usize).min(g.nx - 2);
        let iy = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let m = |i, j| self.mean[g.index(i, j)];
        let bottom = m(ix, iy) * (1.0 - tx) + m(ix + 1, iy) * tx;
        let top = m(ix, iy + 1) * (1.0 - tx) + m(ix + 1, iy + 1) * tx;
        bottom * (1.0 - ty) + top * ty
    }

    /// Max interpolated cost along the robot path.
    pub fn trajectory_cost(&self, robot: &Trajectory) -> Result<f64> {
        self.path_cost(&robot.points)
    }

    pub fn path_cost(&self, points: &[Point]) -> Result<f64> {
        points
            .iter()
            .map(|&p| self.query(p))
            .max_by(f64::total_cmp)
            .ok_or(Error::EmptyTrajectory)
    }

    pub fn max_mean(&self) -> f64 {
        self.mean.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Fields for every task a human might execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpatialModel {
    pub fields: BTreeMap<TaskId, SpatialCostField>,
}

impl SpatialModel {
    pub fn field(&self, task: TaskId) -> Result<&SpatialCostField> {
        self.fields.get(&task).ok_or(Error::UnknownTask(task))
    }

    pub fn update(&mut self, task: TaskId, observed: &Trajectory) -> Result<()> {
        let field = self.fields.get_mut(&task).ok_or(Error::UnknownTask(task))?;
        *field = field.bayes_update(observed)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: Vec<Point>) -> Trajectory {
        let n = points.len();
        Trajectory::new(points, n - 1, 0.1).unwrap()
    }

    fn field_with(mean: Vec<f64>, grid: GridSpec) -> SpatialCostField {
        let n = grid.len();
        SpatialCostField {
            task: TaskId(0),
            grid,
            params: SpatialParams::default(),
            mean,
            var: vec![0.05; n],
            observations: 0,
        }
    }

    #[test]
    fn point_cost_examples() {
        let x = Point::new(0.5, 0.5);
        let on = [Point::new(0.1, 0.1), x];
        assert_eq!(trajectory_point_cost(x, &on, 5.0).unwrap(), 1.0);
        let single = [Point::new(0.5, 0.8)];
        let c = trajectory_point_cost(x, &single, 5.0).unwrap();
        assert!((c - (-1.5f64).exp()).abs() < 1e-12);
        // distances 0.2 and 0.5 with beta 5
        let two = [Point::new(0.7, 0.5), Point::new(0.5, 1.0)];
        let c = trajectory_point_cost(x, &two, 5.0).unwrap();
        let brute = two
            .iter()
            .map(|p| (-5.0 * p.dist(x)).exp())
            .fold(f64::MIN, f64::max);
        assert!((c - brute).abs() < 1e-15);
        assert!((c - 0.36787944117144233).abs() < 1e-12);
        assert!(trajectory_point_cost(x, &[], 5.0).is_err());
    }

    #[test]
    fn priors_initialisation() {
        let grid = GridSpec::unit(5, 5);
        let a = traj(vec![Point::new(0.2, 0.2), Point::new(0.8, 0.2)]);
        let b = traj(vec![Point::new(0.2, 0.9), Point::new(0.8, 0.9)]);
        let p = SpatialParams::default();
        let single = SpatialCostField::from_priors(TaskId(0), std::slice::from_ref(&a), grid, p).unwrap();
        let direct = single.observation(&a).unwrap();
        assert_eq!(single.mean, direct);
        let twice =
            SpatialCostField::from_priors(TaskId(0), &[a.clone(), a.clone()], grid, p).unwrap();
        for (x, y) in twice.mean.iter().zip(&single.mean) {
            assert!((x - y).abs() < 1e-15);
        }
        let mixed = SpatialCostField::from_priors(TaskId(0), &[a.clone(), b.clone()], grid, p).unwrap();
        let ob = SpatialCostField::from_priors(TaskId(0), &[b], grid, p).unwrap();
        for i in 0..grid.len() {
            assert!((mixed.mean[i] - 0.5 * (single.mean[i] + ob.mean[i])).abs() < 1e-12);
        }
        let empty = SpatialCostField::from_priors(TaskId(0), &[], grid, p).unwrap();
        assert!(empty.mean.iter().all(|&m| m == 0.5));
        assert!(empty.var.iter().all(|&v| v == p.rho0_uninformed));
    }

    #[test]
    fn equal_variance_update_is_midpoint() {
        let grid = GridSpec::unit(2, 2);
        let mut f = field_with(vec![0.5; 4], grid);
        f.absorb(&[0.9; 4]);
        assert!((f.mean[0] - 0.7).abs() < 1e-12);
        assert!((f.var[0] - 0.025).abs() < 1e-12);
    }

    #[test]
    fn repeated_observations_contract() {
        let grid = GridSpec::unit(2, 2);
        let mut f = field_with(vec![0.2; 4], grid);
        let mut prev = (f.mean[0], f.var[0]);
        for _ in 0..20 {
            f.absorb(&[0.8; 4]);
            assert!(f.mean[0] > prev.0 && f.mean[0] < 0.8);
            assert!(f.var[0] < prev.1);
            prev = (f.mean[0], f.var[0]);
        }
        // equal prior and noise variance: mean is the average of prior and data
        assert!((f.mean[0] - (0.2 + 20.0 * 0.8) / 21.0).abs() < 1e-12);
    }

    #[test]
    fn query_interpolates() {
        let grid = GridSpec::unit(3, 2);
        // x: 0, .5, 1 ; y: 0, 1
        let f = field_with(vec![0.2, 0.6, 0.1, 0.2, 0.6, 0.1], grid);
        assert!((f.query(Point::new(0.5, 0.0)) - 0.6).abs() < 1e-12);
        assert!((f.query(Point::new(0.25, 0.3)) - 0.4).abs() < 1e-12);
        // clamped outside the bounds
        assert!((f.query(Point::new(-1.0, 2.0)) - 0.2).abs() < 1e-12);
        assert!((f.query(Point::new(1.0, 1.0)) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn trajectory_cost_max_and_monotone() {
        let grid = GridSpec::unit(3, 3);
        let mut mean = vec![0.0; 9];
        mean[grid.index(1, 1)] = 0.9;
        let f = field_with(mean, grid);
        let through = traj(vec![Point::new(0.0, 0.5), Point::new(0.5, 0.5)]);
        assert!((f.trajectory_cost(&through).unwrap() - 0.9).abs() < 1e-12);
        let cold = traj(vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0)]);
        assert_eq!(f.trajectory_cost(&cold).unwrap(), 0.0);
        let sub = traj(vec![Point::new(0.0, 0.0), Point::new(0.3, 0.3)]);
        let sup = traj(vec![Point::new(0.0, 0.0), Point::new(0.3, 0.3), Point::new(0.45, 0.5)]);
        assert!(f.trajectory_cost(&sup).unwrap() >= f.trajectory_cost(&sub).unwrap());
    }

    #[test]
    fn field_json_round_trip() {
        let grid = GridSpec::unit(4, 3);
        let f = SpatialCostField::from_priors(
            TaskId(2),
            &[traj(vec![Point::new(0.1, 0.1), Point::new(0.9, 0.9)])],
            grid,
            SpatialParams::default(),
        )
        .unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: SpatialCostField = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
    }
}
