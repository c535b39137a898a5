//! Task-conditioned DDPM over normalised trajectory knots.

use super::mlp::{Adam, Mlp};
use super::{argmin_key, steering_active, steering_key, MotionContext, MotionPolicy};
use crate::domain::{TaskId, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{resample_uniform, Point};
use crate::spatial::SpatialCostField;
use crate::{seeded_rng, SimRng};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const POLICY_ARTIFACT_VERSION: u32 = 1;

const TIME_FEATURES: usize = 16;
const X0_CLIP: f32 = 1.05;
const SAMPLE_RETRIES: usize = 8;

/// Cosine noise schedule; index `t - 1` holds the values for step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(steps: usize) -> Self {
        let s = 0.008;
        let f = |t: f64| (((t / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2).cos().powi(2);
        let f0 = f(0.0);
        let mut betas = Vec::with_capacity(steps);
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prev = 1.0;
        for t in 1..=steps {
            let beta = (1.0 - f(t as f64) / f0 / prev).clamp(1e-5, 0.999);
            prev *= 1.0 - beta;
            betas.push(beta);
            alpha_bars.push(prev);
        }
        Self { betas, alpha_bars }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Coefficients `(c_x0, c_xt, variance)` of q(x_{t-1} | x_t, x0).
    fn posterior(&self, t: usize) -> (f64, f64, f64) {
        let beta = self.betas[t - 1];
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let var = beta * (1.0 - ab_prev) / (1.0 - ab);
        (c0, ct, var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub knots: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub diffusion_steps: usize,
    pub candidates: usize,
    /// DDIM strides used to look ahead when scoring a candidate.
    pub lookahead: usize,
    pub batch: usize,
    pub lr: f32,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Evaluations without a 1% improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub min_demos: usize,
    /// Held-out loss above which training is reported as failed.
    pub loss_threshold: f64,
    /// A final knot this close to the goal is snapped onto it.
    pub goal_snap: f64,
    pub bank_per_task: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            knots: 16,
            hidden: 128,
            hidden_layers: 3,
            diffusion_steps: 50,
            candidates: 8,
            lookahead: 4,
            batch: 64,
            lr: 1e-3,
            max_steps: 30_000,
            eval_every: 500,
            patience: 10,
            val_fraction: 0.1,
            min_demos: 20,
            loss_threshold: 0.5,
            goal_snap: 0.08,
            bank_per_task: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPolicy {
    pub version: u32,
    pub context: MotionContext,
    pub n_tasks: usize,
    pub knots: usize,
    pub candidates: usize,
    pub lookahead: usize,
    pub goal_snap: f64,
    pub schedule: NoiseSchedule,
    pub net: Mlp,
    /// Known-good demonstrations used when sampling cannot find a valid path.
    pub bank: BTreeMap<TaskId, Vec<Trajectory>>,
    pub loss_log: Vec<LossRecord>,
}

struct Example {
    task: usize,
    x0: Vec<f32>,
}

impl DiffusionPolicy {
    /// Fit a denoiser to the demonstrations.
    pub fn train(
        context: MotionContext,
        demos: &BTreeMap<TaskId, Vec<Trajectory>>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if cfg.knots < 2 || cfg.diffusion_steps < 1 || cfg.candidates < 1 || cfg.batch < 1 {
            return Err(Error::InvalidConfig("diffusion sizes must be positive".into()));
        }
        let n_tasks = context.goals.len();
        for (i, task) in context.goals.keys().enumerate() {
            if task.0 != i {
                return Err(Error::InvalidConfig("goal ids must be dense".into()));
            }
            let count = demos.get(task).map_or(0, Vec::len);
            if count < cfg.min_demos {
                return Err(Error::InsufficientDemonstrations {
                    task: *task,
                    count,
                    required: cfg.min_demos,
                });
            }
        }
        let mut rng = seeded_rng(cfg.seed);
        let dim = 2 * cfg.knots;
        let mut sizes = vec![dim + TIME_FEATURES + n_tasks];
        sizes.extend(std::iter::repeat_n(cfg.hidden, cfg.hidden_layers));
        sizes.push(dim);
        let mut policy = Self {
            version: POLICY_ARTIFACT_VERSION,
            n_tasks,
            knots: cfg.knots,
            candidates: cfg.candidates,
            lookahead: cfg.lookahead.max(1),
            goal_snap: cfg.goal_snap,
            schedule: NoiseSchedule::cosine(cfg.diffusion_steps),
            net: Mlp::new(&sizes, &mut rng),
            bank: BTreeMap::new(),
            loss_log: Vec::new(),
            context,
        };

        let mut train_set = Vec::new();
        let mut val_set = Vec::new();
        for (task, list) in demos {
            if task.0 >= n_tasks {
                continue;
            }
            let mut order: Vec<usize> = (0..list.len()).collect();
            order.shuffle(&mut rng);
            let n_val = ((list.len() as f64 * cfg.val_fraction).round() as usize).max(1);
            for (k, &i) in order.iter().enumerate() {
                let ex = Example {
                    task: task.0,
                    x0: policy.encode(list[i].active_points()),
                };
                if k < n_val {
                    val_set.push(ex);
                } else {
                    train_set.push(ex);
                }
            }
            let mut bank: Vec<Trajectory> = list
                .iter()
                .filter(|t| !policy.context.collides(t))
                .take(cfg.bank_per_task)
                .cloned()
                .collect();
            bank.sort_by(|a, b| a.duration().total_cmp(&b.duration()));
            policy.bank.insert(*task, bank);
        }

        let val_batch = policy.noised_batch(&val_set, 8, &mut seeded_rng(cfg.seed ^ 0x5eed));
        let mut opt = Adam::new(&policy.net);
        let mut best = (f64::INFINITY, policy.net.clone());
        let mut since_best = 0;
        let mut running = 0.0;
        let mut running_n = 0usize;
        for step in 1..=cfg.max_steps {
            let picks: Vec<&Example> = (0..cfg.batch)
                .map(|_| &train_set[rng.random_range(0..train_set.len())])
                .collect();
            let (x, target) = policy.noised_batch_refs(&picks, &mut rng);
            let (out, tape) = policy.net.forward_tape(&x);
            let diff = &out - &target;
            let n = diff.len() as f32;
            running += diff.mapv(|d| d * d).sum() as f64 / n as f64;
            running_n += 1;
            let grads = policy.net.backward(&tape, diff * (2.0 / n));
            opt.step(&mut policy.net, &grads, cfg.lr);

            if step % cfg.eval_every == 0 || step == cfg.max_steps {
                let val = policy.loss(&val_batch.0, &val_batch.1);
                policy.loss_log.push(LossRecord {
                    step,
                    train: running / running_n as f64,
                    val,
                });
                log::debug!("step {step}: train {:.4} val {val:.4}", running / running_n as f64);
                running = 0.0;
                running_n = 0;
                if val < best.0 * 0.99 {
                    best = (val, policy.net.clone());
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        break;
                    }
                }
            }
        }
        policy.net = best.1;
        if !(best.0 <= cfg.loss_threshold) {
            return Err(Error::NonConvergence {
                loss: best.0,
                threshold: cfg.loss_threshold,
            });
        }
        Ok(policy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != POLICY_ARTIFACT_VERSION {
            return Err(Error::ArtifactVersion {
                found: header.version,
                expected: POLICY_ARTIFACT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn with_candidates(mut self, n: usize) -> Self {
        self.candidates = n.max(1);
        self
    }

    /// Normalise a path into `knots` evenly spaced points in `[-1, 1]^2`.
    pub fn encode(&self, path: &[Point]) -> Vec<f32> {
        let b = &self.context.bounds;
        resample_uniform(path, self.knots)
            .into_iter()
            .flat_map(|p| {
                [
                    (2.0 * (p.x - b.min.x) / b.width() - 1.0) as f32,
                    (2.0 * (p.y - b.min.y) / b.height() - 1.0) as f32,
                ]
            })
            .collect()
    }

    /// Knot path in workspace coordinates with the start pinned and the goal
    /// appended when the final knot lands within `snap` of it.
    pub fn decode_path(&self, task: TaskId, x: &[f32], snap: f64) -> Result<Vec<Point>> {
        let b = &self.context.bounds;
        let mut path: Vec<Point> = x
            .chunks_exact(2)
            .map(|c| {
                Point::new(
                    b.min.x + (c[0] as f64 + 1.0) * 0.5 * b.width(),
                    b.min.y + (c[1] as f64 + 1.0) * 0.5 * b.height(),
                )
            })
            .collect();
        path[0] = self.context.start;
        let goal = self.context.goal(task)?;
        if path.last().unwrap().dist(goal) <= snap {
            path.push(goal);
        }
        Ok(path)
    }

    pub fn decode(&self, task: TaskId, x: &[f32]) -> Result<Trajectory> {
        let path = self.decode_path(task, x, self.goal_snap)?;
        self.context.trajectory_from_path(task, &path)
    }

    /// Intermediate clean estimates are scored as if completed to the goal,
    /// so their value reflects the route they commit to.
    fn decode_estimate(&self, task: TaskId, x: &[f32]) -> Result<Trajectory> {
        let path = self.decode_path(task, x, f64::INFINITY)?;
        self.context.trajectory_from_path(task, &path)
    }

    fn features(&self, x: &Array2<f32>, t: usize, task: usize) -> Array2<f32> {
        let rows = x.nrows();
        let dim = x.ncols();
        let mut input = Array2::zeros((rows, dim + TIME_FEATURES + self.n_tasks));
        input.slice_mut(ndarray::s![.., ..dim]).assign(x);
        let emb = time_embedding(t, self.schedule.steps());
        for r in 0..rows {
            for (k, e) in emb.iter().enumerate() {
                input[[r, dim + k]] = *e;
            }
            input[[r, dim + TIME_FEATURES + task]] = 1.0;
        }
        input
    }

    fn noised_batch_refs(&self, picks: &[&Example], rng: &mut SimRng) -> (Array2<f32>, Array2<f32>) {
        let dim = 2 * self.knots;
        let steps = self.schedule.steps();
        let width = dim + TIME_FEATURES + self.n_tasks;
        let mut input = Array2::zeros((picks.len(), width));
        let mut target = Array2::zeros((picks.len(), dim));
        for (r, ex) in picks.iter().enumerate() {
            let t = rng.random_range(1..=steps);
            let ab = self.schedule.alpha_bar(t);
            let (sa, sn) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
            for k in 0..dim {
                let eps: f32 = rng.sample(StandardNormal);
                input[[r, k]] = sa * ex.x0[k] + sn * eps;
                target[[r, k]] = eps;
            }
            for (k, e) in time_embedding(t, steps).iter().enumerate() {
                input[[r, dim + k]] = *e;
            }
            input[[r, dim + TIME_FEATURES + ex.task]] = 1.0;
        }
        (input, target)
    }

    fn noised_batch(&self, set: &[Example], repeats: usize, rng: &mut SimRng) -> (Array2<f32>, Array2<f32>) {
        let picks: Vec<&Example> = set.iter().flat_map(|e| std::iter::repeat_n(e, repeats)).collect();
        self.noised_batch_refs(&picks, rng)
    }

    fn loss(&self, x: &Array2<f32>, target: &Array2<f32>) -> f64 {
        let out = self.net.forward(x);
        let diff = &out - target;
        diff.mapv(|d| d * d).sum() as f64 / diff.len() as f64
    }

    /// Clean estimate for each row of `x` at step `t`.
    fn predict_x0(&self, x: &Array2<f32>, t: usize, task: usize) -> Array2<f32> {
        let eps = self.net.forward(&self.features(x, t, task));
        let ab = self.schedule.alpha_bar(t);
        let (sa, sn) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        let mut x0 = x - &(eps * sn);
        x0.mapv_inplace(|v| (v / sa).clamp(-X0_CLIP, X0_CLIP));
        x0
    }

    /// Clean estimate reached by a deterministic DDIM descent from step `t`
    /// in at most `jumps` strides.
    fn lookahead(&self, x: &Array2<f32>, t: usize, task: usize, jumps: usize) -> Array2<f32> {
        let mut x = x.clone();
        let mut t = t;
        let mut x0 = self.predict_x0(&x, t, task);
        let jumps = jumps.max(1);
        for k in 1..jumps {
            let s = t * (jumps - k) / (jumps - k + 1);
            if s == 0 || s >= t {
                break;
            }
            let (ab_t, ab_s) = (self.schedule.alpha_bar(t), self.schedule.alpha_bar(s));
            let eps = (&x - &(&x0 * ab_t.sqrt() as f32)) / (1.0 - ab_t).sqrt() as f32;
            x = &x0 * ab_s.sqrt() as f32 + &eps * (1.0 - ab_s).sqrt() as f32;
            t = s;
            x0 = self.predict_x0(&x, t, task);
        }
        x0
    }

    /// One reverse pass. With `score`, each step keeps the best of
    /// `candidates` draws judged on where a short deterministic descent from
    /// each of them lands.
    fn denoise(
        &self,
        task: usize,
        candidates: usize,
        score: Option<&dyn Fn(&[f32]) -> (bool, f64)>,
        rng: &mut SimRng,
    ) -> Vec<f32> {
        let dim = 2 * self.knots;
        let steps = self.schedule.steps();
        let mut x = Array2::from_shape_fn((1, dim), |_| rng.sample::<f32, _>(StandardNormal));
        let mut x0 = self.predict_x0(&x, steps, task);
        for t in (1..=steps).rev() {
            let (c0, ct, var) = self.schedule.posterior(t);
            let mean = &x0 * c0 as f32 + &x * ct as f32;
            let sd = var.sqrt() as f32;
            let n = if score.is_some() { candidates } else { 1 };
            let mut next = Array2::zeros((n, dim));
            for mut row in next.rows_mut() {
                for (k, v) in row.iter_mut().enumerate() {
                    let z: f32 = rng.sample(StandardNormal);
                    *v = mean[[0, k]] + sd * z;
                }
            }
            let steering = score.is_some() && n > 1;
            let next_x0 = if t > 1 {
                if steering {
                    self.lookahead(&next, t - 1, task, self.lookahead)
                } else {
                    self.predict_x0(&next, t - 1, task)
                }
            } else {
                next.clone()
            };
            let pick = match score {
                Some(score) if n > 1 => {
                    let keys: Vec<(bool, f64)> = next_x0
                        .rows()
                        .into_iter()
                        .map(|r| score(r.as_slice().unwrap()))
                        .collect();
                    argmin_key(&keys)
                }
                _ => 0,
            };
            x = next.select(Axis(0), &[pick]);
            x0 = if steering && t > 1 {
                self.predict_x0(&x, t - 1, task)
            } else {
                next_x0.select(Axis(0), &[pick])
            };
        }
        x.row(0).to_vec()
    }

    fn fallback(&self, task: TaskId, fields: &[&SpatialCostField], gamma: f64) -> Result<Trajectory> {
        let bank = self.bank.get(&task).ok_or(Error::UnknownTask(task))?;
        let keys: Vec<(bool, f64)> = bank
            .iter()
            .map(|t| steering_key(&self.context, t, fields, gamma))
            .collect();
        bank.get(argmin_key(&keys))
            .cloned()
            .ok_or(Error::InsufficientDemonstrations {
                task,
                count: 0,
                required: 1,
            })
    }

    fn valid(&self, task: TaskId, traj: &Trajectory) -> Result<bool> {
        Ok(!self.context.collides(traj) && traj.reaches(self.context.goal(task)?, self.context.goal_tolerance))
    }
}

fn time_embedding(t: usize, steps: usize) -> [f32; TIME_FEATURES] {
    let tn = t as f64 / steps as f64;
    let mut out = [0.0; TIME_FEATURES];
    for k in 0..TIME_FEATURES / 2 {
        let angle = tn * std::f64::consts::PI * 0.5 * (1u32 << k) as f64;
        out[2 * k] = angle.sin() as f32;
        out[2 * k + 1] = angle.cos() as f32;
    }
    out
}

impl MotionPolicy for DiffusionPolicy {
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
        if task.0 >= self.n_tasks {
            return Err(Error::UnknownTask(task));
        }
        let steer = steering_active(fields, gamma);
        let score = |x: &[f32]| match self.decode_estimate(task, x) {
            Ok(traj) => steering_key(&self.context, &traj, fields, gamma),
            Err(_) => (true, f64::INFINITY),
        };
        let score: Option<&dyn Fn(&[f32]) -> (bool, f64)> = if steer { Some(&score) } else { None };
        for _ in 0..SAMPLE_RETRIES {
            let x = self.denoise(task.0, self.candidates, score, rng);
            let traj = self.decode(task, &x)?;
            if self.valid(task, &traj)? {
                return Ok(traj);
            }
        }
        log::debug!("falling back to stored demonstration for {task}");
        self.fallback(task, fields, gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_is_monotone() {
        let s = NoiseSchedule::cosine(50);
        assert_eq!(s.steps(), 50);
        assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bars[0] > 0.99);
        assert!(s.alpha_bars[49] < 1e-3);
        let (c0, ct, var) = s.posterior(1);
        assert!((c0 - 1.0).abs() < 1e-12 && ct.abs() < 1e-12 && var.abs() < 1e-12);
    }

    #[test]
    fn time_embedding_distinguishes_steps() {
        let a = time_embedding(10, 50);
        let b = time_embedding(11, 50);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-3));
    }
}
