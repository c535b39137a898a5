//! Normal-Inverse-Gamma beliefs over each task's human duration.

use crate::domain::TaskId;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lower truncation bound for sampled durations, in seconds.
pub const DURATION_FLOOR: f64 = 0.1;

/// Hyperparameters of `NIG(mu0, nu, alpha, beta)` over `(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mu0: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(mu0: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu0,
            nu,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Weakly informative prior whose variance point estimate equals
    /// `(rel_sd * mu0)^2`.
    pub fn weak(mu0: f64, rel_sd: f64) -> Result<Self> {
        let alpha = 2.0;
        let beta = (rel_sd * mu0).powi(2) * (alpha - 1.0);
        Self::new(mu0, 1.0, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu0, self.nu, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.nu <= 0.0 || self.alpha <= 1.0 || self.beta <= 0.0 || self.mu0 <= 0.0 {
            return Err(Error::InvalidHyperparameters(format!("{self:?}")));
        }
        Ok(())
    }

    /// Single-observation conjugate update.
    pub fn update(&self, d: f64) -> Self {
        let nu1 = self.nu + 1.0;
        Self {
            mu0: (self.nu * self.mu0 + d) / nu1,
            nu: nu1,
            alpha: self.alpha + 0.5,
            beta: self.beta + self.nu * (d - self.mu0).powi(2) / (2.0 * nu1),
        }
    }

    /// Closed-form update with a batch of observations.
    pub fn batch_update(&self, ds: &[f64]) -> Self {
        if ds.is_empty() {
            return *self;
        }
        let n = ds.len() as f64;
        let mean = ds.iter().sum::<f64>() / n;
        let ss: f64 = ds.iter().map(|d| (d - mean).powi(2)).sum();
        let nu_n = self.nu + n;
        Self {
            mu0: (self.nu * self.mu0 + n * mean) / nu_n,
            nu: nu_n,
            alpha: self.alpha + n / 2.0,
            beta: self.beta + 0.5 * ss + self.nu * n * (mean - self.mu0).powi(2) / (2.0 * nu_n),
        }
    }

    /// Posterior means `(E[mu], E[sigma^2])`.
    pub fn point_estimates(&self) -> Result<(f64, f64)> {
        if self.alpha <= 1.0 {
            return Err(Error::UndefinedVariance(self.alpha));
        }
        Ok((self.mu0, self.beta / (self.alpha - 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TemporalModel {
    pub tasks: BTreeMap<TaskId, NigParams>,
}

impl TemporalModel {
    pub fn new(tasks: BTreeMap<TaskId, NigParams>) -> Result<Self> {
        for p in tasks.values() {
            p.validate()?;
        }
        Ok(Self { tasks })
    }

    pub fn params(&self, task: TaskId) -> Result<&NigParams> {
        self.tasks.get(&task).ok_or(Error::UnknownTask(task))
    }

    pub fn update(&self, task: TaskId, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::NonPositiveDuration(duration, task));
        }
        let p = self.params(task)?.update(duration);
        let mut next = self.clone();
        next.tasks.insert(task, p);
        Ok(next)
    }

    pub fn point_estimates(&self, task: TaskId) -> Result<(f64, f64)> {
        self.params(task)?.point_estimates()
    }

    /// Mean duration per task, indexed by task id (`n` entries).
    pub fn means(&self, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|i| self.point_estimates(TaskId(i)).map(|(m, _)| m))
            .collect()
    }

    pub fn sample_durations(
        &self,
        tasks: &[TaskId],
        rng: &mut impl Rng,
    ) -> Result<BTreeMap<TaskId, f64>> {
        tasks
            .iter()
            .map(|&t| {
                let (m, v) = self.point_estimates(t)?;
                Ok((t, truncated_normal(m, v.sqrt(), rng)))
            })
            .collect()
    }

    /// Precompute per-task `(mean, sd)` for repeated sampling.
    pub fn sampler(&self, n: usize) -> Result<DurationSampler> {
        let moments = (0..n)
            .map(|i| {
                self.point_estimates(TaskId(i))
                    .map(|(m, v)| (m, v.max(0.0).sqrt()))
            })
            .collect::<Result<_>>()?;
        Ok(DurationSampler { moments })
    }
}

/// Gaussian draw rejected below [`DURATION_FLOOR`].
pub fn truncated_normal(mean: f64, sd: f64, rng: &mut impl Rng) -> f64 {
    if sd == 0.0 {
        return mean.max(DURATION_FLOOR);
    }
    for _ in 0..64 {
        let z: f64 = rng.sample(StandardNormal);
        let d = mean + sd * z;
        if d >= DURATION_FLOOR {
            return d;
        }
    }
    mean.max(DURATION_FLOOR)
}

#[derive(Debug, Clone)]
pub struct DurationSampler {
    moments: Vec<(f64, f64)>,
}

impl DurationSampler {
    pub fn mean(&self, task: TaskId) -> f64 {
        self.moments[task.0].0
    }

    /// Fill `out[t]` for each task in `tasks`.
    pub fn fill(&self, tasks: &[TaskId], out: &mut [f64], rng: &mut impl Rng) {
        for &t in tasks {
            let (m, s) = self.moments[t.0];
            out[t.0] = truncated_normal(m, s, rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn model(p: NigParams) -> TemporalModel {
        TemporalModel::new([(TaskId(0), p)].into_iter().collect()).unwrap()
    }

    #[test]
    fn worked_update() {
        let p = NigParams::new(10.0, 1.0, 2.0, 4.0).unwrap().update(12.0);
        assert_eq!((p.mu0, p.nu, p.alpha, p.beta), (11.0, 2.0, 2.5, 5.0));
    }

    #[test]
    fn zero_innovation() {
        let p = NigParams::new(10.0, 3.0, 2.0, 4.0).unwrap();
        let q = p.update(10.0);
        assert_eq!(q.mu0, 10.0);
        assert_eq!(q.beta, 4.0);
    }

    #[test]
    fn sequential_order_invariant() {
        let p = NigParams::new(8.0, 1.5, 2.0, 3.0).unwrap();
        let a = p.update(7.0).update(11.0);
        let b = p.update(11.0).update(7.0);
        let c = p.batch_update(&[7.0, 11.0]);
        for (x, y) in [(a, b), (a, c)] {
            assert!((x.mu0 - y.mu0).abs() < 1e-12);
            assert!((x.beta - y.beta).abs() < 1e-12);
            assert_eq!(x.nu, y.nu);
            assert_eq!(x.alpha, y.alpha);
        }
    }

    #[test]
    fn point_estimate_examples() {
        let p = NigParams::new(10.0, 1.0, 2.0, 4.0).unwrap();
        assert_eq!(p.point_estimates().unwrap(), (10.0, 4.0));
        let bad = NigParams {
            alpha: 1.0,
            ..p
        };
        assert!(bad.point_estimates().is_err());
        let mut q = p;
        for _ in 0..500 {
            q = q.update(6.0);
        }
        assert!((q.point_estimates().unwrap().0 - 6.0).abs() < 0.01);
    }

    #[test]
    fn variance_shrinks_under_observations_at_mean() {
        for mu0 in [1.0, 5.0, 20.0] {
            for nu in [0.5, 1.0, 4.0] {
                for alpha in [1.5, 2.0, 5.0] {
                    for beta in [0.1, 1.0, 10.0] {
                        let mut p = NigParams::new(mu0, nu, alpha, beta).unwrap();
                        for _ in 0..5 {
                            let q = p.update(mu0);
                            assert!(q.point_estimates().unwrap().1 < p.point_estimates().unwrap().1);
                            p = q;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn update_rejects_non_positive() {
        let m = model(NigParams::new(10.0, 1.0, 2.0, 4.0).unwrap());
        assert!(m.update(TaskId(0), 0.0).is_err());
        assert!(m.update(TaskId(0), -1.0).is_err());
        assert!(m.update(TaskId(3), 1.0).is_err());
    }

    #[test]
    fn sampling_contracts() {
        let m = model(NigParams::new(10.0, 1.0, 2.0, 4.0).unwrap());
        let mut rng = seeded_rng(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += m.sample_durations(&[TaskId(0)], &mut rng).unwrap()[&TaskId(0)];
        }
        let se = 2.0 / (n as f64).sqrt();
        assert!((sum / n as f64 - 10.0).abs() < 3.0 * se);

        let wide = model(NigParams::new(0.3, 1.0, 2.0, 1.0).unwrap());
        for _ in 0..2000 {
            assert!(wide.sample_durations(&[TaskId(0)], &mut rng).unwrap()[&TaskId(0)] >= DURATION_FLOOR);
        }

        let tight = model(NigParams::new(4.0, 1.0, 2.0, 1e-300).unwrap());
        for _ in 0..10 {
            let d = tight.sample_durations(&[TaskId(0)], &mut rng).unwrap()[&TaskId(0)];
            assert!((d - 4.0).abs() < 1e-100);
        }
    }
}
