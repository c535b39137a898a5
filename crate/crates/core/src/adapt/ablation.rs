use super::{run, AdaptationLevel, HumanSource, RunConfig};
use crate::error::{Error, Result};
use crate::fetch::{HumanArchetype, WorldSpec};
use crate::motion::MotionPolicy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub base: RunConfig,
    pub trials: usize,
    pub archetypes: Vec<HumanArchetype>,
    pub levels: Vec<AdaptationLevel>,
    /// Trailing cycles pooled into a cell's headline median.
    pub final_cycles: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            trials: 20,
            archetypes: HumanArchetype::ALL.to_vec(),
            levels: AdaptationLevel::ALL.to_vec(),
            final_cycles: 3,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials < 1 || self.archetypes.is_empty() || self.levels.is_empty() {
            return Err(Error::InvalidConfig("ablation needs trials, archetypes and levels".into()));
        }
        if self.final_cycles < 1 || self.final_cycles > self.base.cycles {
            return Err(Error::InvalidConfig("final_cycles must lie in 1..=cycles".into()));
        }
        Ok(())
    }

    /// Seed of `trial`; shared by every cell so levels see the same draws.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Reference plan cost per cycle.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStat {
    pub cycle: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub archetype: HumanArchetype,
    pub level: AdaptationLevel,
    pub per_cycle: Vec<CycleStat>,
    /// Median over trials of the pooled trailing-cycle costs.
    pub final_median: f64,
    pub trials: Vec<TrialResult>,
}

impl CellResult {
    pub fn file_name(&self) -> String {
        Self::file_name_for(self.archetype, self.level)
    }

    pub fn file_name_for(archetype: HumanArchetype, level: AdaptationLevel) -> String {
        format!("cell-{archetype}-{}.json", level.name().replace('+', "-"))
    }

    fn summarise(archetype: HumanArchetype, level: AdaptationLevel, trials: Vec<TrialResult>, final_cycles: usize) -> Self {
        let cycles = trials.iter().map(|t| t.costs.len()).min().unwrap_or(0);
        let per_cycle = (0..cycles)
            .map(|c| {
                let mut v: Vec<f64> = trials.iter().map(|t| t.costs[c]).collect();
                v.sort_by(f64::total_cmp);
                CycleStat {
                    cycle: c,
                    median: quantile(&v, 0.5),
                    q1: quantile(&v, 0.25),
                    q3: quantile(&v, 0.75),
                }
            })
            .collect();
        let from = cycles.saturating_sub(final_cycles);
        let mut pooled: Vec<f64> = trials.iter().flat_map(|t| t.costs[from..cycles].iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        Self {
            archetype,
            level,
            per_cycle,
            final_median: quantile(&pooled, 0.5),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResults {
    pub config: AblationConfig,
    pub cells: Vec<CellResult>,
}

impl AblationResults {
    pub fn cell(&self, archetype: HumanArchetype, level: AdaptationLevel) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.archetype == archetype && c.level == level)
    }
}

/// Linear-interpolation quantile of sorted data; NaN when empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let x = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            sorted[i] + (sorted[i + 1] - sorted[i]) * (x - i as f64)
        }
    }
}

/// Every (archetype, level, trial) run, in parallel, summarised per cell.
pub fn run_ablation_suite(
    config: &AblationConfig,
    world: &WorldSpec,
    policy: &dyn MotionPolicy,
) -> Result<AblationResults> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &a in &config.archetypes {
        for &l in &config.levels {
            for trial in 0..config.trials {
                jobs.push((a, l, trial));
            }
        }
    }
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(archetype, level, trial)| {
            let mut cfg = config.base.clone();
            cfg.level = level;
            cfg.human = HumanSource::Archetype(archetype);
            cfg.seed = config.trial_seed(trial);
            let log = run(&cfg, world, policy)?;
            let costs = log
                .records
                .iter()
                .map(|r| r.reference.map_or(f64::NAN, |c| c.cost))
                .collect();
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            log::info!("ablation {k}/{total}: {archetype} {level} trial {trial}");
            Ok(TrialResult {
                trial,
                seed: cfg.seed,
                costs,
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut it = outcomes.into_iter();
    for &a in &config.archetypes {
        for &l in &config.levels {
            let trials: Vec<TrialResult> = it.by_ref().take(config.trials).collect();
            cells.push(CellResult::summarise(a, l, trials, config.final_cycles));
        }
    }
    Ok(AblationResults {
        config: config.clone(),
        cells,
    })
}
