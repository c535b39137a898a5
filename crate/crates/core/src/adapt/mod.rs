//! The multi-cycle loop: optimise a plan, deploy it, and fold what the
//! human did back into the spatial and temporal beliefs.

mod ablation;

pub use ablation::{quantile, 
    run_ablation_suite, AblationConfig, AblationResults, CellResult, CycleStat, TrialResult,
};

use crate::domain::{AllocationHistory, PlanResult, TaskId, TaskSet};
use crate::error::{Error, Result};
use crate::fetch::{deploy_archetype, reference_models, CycleObservation, HumanArchetype, TaskRecord, WorldSpec};
use crate::live::{CostSummary, DurationEstimate, Frame, Heatmap, PlanSummary};
use crate::motion::MotionPolicy;
use crate::scheduler::{compute_overlaps, monte_carlo_makespan, optimize, spatial_cost, GaConfig, GenerationStats};
use crate::spatial::{GridSpec, SpatialModel, SpatialParams};
use crate::temporal::TemporalModel;
use crate::{seeded_rng, SimRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Which beliefs are updated between cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AdaptationLevel {
    #[serde(rename = "space+time")]
    SpaceTime,
    #[serde(rename = "space")]
    Space,
    #[serde(rename = "time")]
    Time,
    #[serde(rename = "none")]
    None,
}

impl AdaptationLevel {
    pub const ALL: [AdaptationLevel; 4] = [
        AdaptationLevel::SpaceTime,
        AdaptationLevel::Space,
        AdaptationLevel::Time,
        AdaptationLevel::None,
    ];

    pub fn space(self) -> bool {
        matches!(self, AdaptationLevel::SpaceTime | AdaptationLevel::Space)
    }

    pub fn time(self) -> bool {
        matches!(self, AdaptationLevel::SpaceTime | AdaptationLevel::Time)
    }

    pub fn name(self) -> &'static str {
        match self {
            AdaptationLevel::SpaceTime => "space+time",
            AdaptationLevel::Space => "space",
            AdaptationLevel::Time => "time",
            AdaptationLevel::None => "none",
        }
    }
}

impl fmt::Display for AdaptationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown adaptation level {s:?}")))
    }
}

/// Where the human behaviour comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanSource {
    Archetype(HumanArchetype),
    Live,
}

/// Diversity weight for the first `cutoff` cycles, zero afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaSchedule {
    pub value: f64,
    /// Defaults to half the cycle count.
    pub cutoff: Option<usize>,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            value: 15.0,
            cutoff: None,
        }
    }
}

impl LambdaSchedule {
    pub fn cutoff(&self, cycles: usize) -> usize {
        self.cutoff.unwrap_or(cycles / 2)
    }

    /// Weight for zero-based `cycle`.
    pub fn at(&self, cycle: usize, cycles: usize) -> f64 {
        if cycle < self.cutoff(cycles) {
            self.value
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cycles: usize,
    pub level: AdaptationLevel,
    pub ga: GaConfig,
    pub lambda: LambdaSchedule,
    pub human: HumanSource,
    pub seed: u64,
    /// Proximity sampling interval during simulated deployment, seconds.
    pub tick: f64,
    pub grid: usize,
    pub spatial: SpatialParams,
    /// Prior duration standard deviation as a fraction of the prior mean.
    pub prior_rel_sd: f64,
    /// Unsteered samples per task behind the initial robot durations.
    pub init_draws: usize,
    /// Simulated executions behind an archetype's reference models.
    pub reference_draws: usize,
    /// Write full model dumps into every cycle record.
    pub dump_models: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cycles: 16,
            level: AdaptationLevel::SpaceTime,
            ga: GaConfig::default(),
            lambda: LambdaSchedule::default(),
            human: HumanSource::Archetype(HumanArchetype::ALL[0]),
            seed: 0,
            tick: 0.05,
            grid: 40,
            spatial: SpatialParams::default(),
            prior_rel_sd: 0.25,
            init_draws: 10,
            reference_draws: 200,
            dump_models: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.cycles < 1 {
            return bad("cycles must be at least 1");
        }
        if self.lambda.cutoff(self.cycles) > self.cycles {
            return bad("lambda cutoff exceeds the cycle count");
        }
        if !(self.lambda.value >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.tick > 0.0) {
            return bad("tick must be positive");
        }
        if self.grid < 2 {
            return bad("grid must have at least 2 points per side");
        }
        if self.init_draws < 1 || self.reference_draws < 2 {
            return bad("draw counts too small");
        }
        if !(self.prior_rel_sd > 0.0) {
            return bad("prior_rel_sd must be positive");
        }
        self.ga.validate()
    }
}

/// Independent stream for (`seed`, `cycle`, `stream`).
pub fn stream_seed(seed: u64, cycle: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(cycle.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_PLAN: u64 = 2;
const STREAM_DEPLOY: u64 = 3;
const STREAM_REFERENCE: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// Hex SHA-256 of a value's JSON form.
pub fn model_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("models serialise");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub temporal_hash: String,
    pub spatial_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialModel>,
}

/// Plan cost against an archetype's ground-truth models, diversity excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCost {
    pub cost: f64,
    pub makespan: f64,
    pub spatial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub human_durations: BTreeMap<TaskId, f64>,
    pub tasks: Vec<TaskRecord>,
    pub makespan: f64,
    pub min_distance: f64,
}

impl From<&CycleObservation> for ObservationSummary {
    fn from(o: &CycleObservation) -> Self {
        Self {
            human_durations: o.human_durations.clone(),
            tasks: o.tasks.clone(),
            makespan: o.makespan,
            min_distance: o.min_distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub optimize_ms: f64,
    pub deploy_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub evaluations: usize,
    pub memory_hits: usize,
    pub memory_misses: usize,
    pub fixed_point_capped: bool,
}

/// One cycle of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub lambda: f64,
    pub plan: PlanSummary,
    pub search: SearchStats,
    /// Best cost per generation.
    pub trace: Vec<GenerationStats>,
    /// `z` at λ = 0 under the beliefs the plan was made with.
    pub planned_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Beliefs after this cycle's updates.
    pub models: ModelSnapshot,
    /// Wall-clock only; excluded from reproducibility comparisons.
    pub timings: Timings,
}

/// Append-only per-cycle records, written as JSON lines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<CycleRecord>,
}

impl RunLog {
    pub fn push(&mut self, record: CycleRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialise"));
            out.push('\n');
        }
        out
    }

    /// JSON lines with every timing zeroed.
    pub fn canonical_jsonl(&self) -> String {
        let mut log = self.clone();
        for r in &mut log.records {
            r.timings = Timings::default();
        }
        log.to_jsonl()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }
}

/// Evaluate a plan's chosen genome and trajectories against `reference`
/// models with `gamma` and no diversity term.
pub fn reference_cost(
    plan: &PlanResult,
    task_set: &TaskSet,
    reference: &(TemporalModel, SpatialModel),
    gamma: f64,
    samples: usize,
    rng: &mut SimRng,
) -> Result<ReferenceCost> {
    if !plan.feasible {
        return Err(Error::InfeasiblePlan);
    }
    let n = task_set.len();
    let mut robot = vec![0.0; n];
    for (t, traj) in &plan.robot_trajectories {
        robot[t.0] = traj.duration();
    }
    let (temporal, spatial) = reference;
    let makespan = monte_carlo_makespan(&plan.genome, task_set, temporal, &robot, samples, rng)?;
    let overlaps = compute_overlaps(&plan.genome, task_set, &temporal.means(n)?, &robot)?;
    let z_s = spatial_cost(&plan.robot_trajectories, &overlaps, spatial)?;
    Ok(ReferenceCost {
        cost: makespan + gamma * z_s,
        makespan,
        spatial: z_s,
    })
}

/// A plan awaiting deployment.
#[derive(Debug, Clone)]
pub struct PlannedCycle {
    pub cycle: usize,
    pub lambda: f64,
    pub plan: PlanResult,
    pub search: SearchStats,
    pub trace: Vec<GenerationStats>,
    pub planned_cost: Option<f64>,
    pub reference: Option<ReferenceCost>,
    pub optimize_ms: f64,
}

/// State carried between cycles.
pub struct Adapter<'a> {
    pub config: RunConfig,
    pub world: &'a WorldSpec,
    pub policy: &'a dyn MotionPolicy,
    pub task_set: TaskSet,
    pub temporal: TemporalModel,
    pub spatial: SpatialModel,
    pub history: AllocationHistory,
    pub robot_durations_init: Vec<f64>,
    /// Ground-truth models of a scripted human, when known.
    pub reference: Option<(TemporalModel, SpatialModel)>,
    next_cycle: usize,
}

impl<'a> Adapter<'a> {
    pub fn new(config: RunConfig, world: &'a WorldSpec, policy: &'a dyn MotionPolicy) -> Result<Self> {
        config.validate()?;
        let task_set = world.task_set()?;
        let n = task_set.len();
        let grid = GridSpec::unit(config.grid, config.grid);
        let temporal = world.prior_temporal(config.prior_rel_sd)?;
        let spatial = world.prior_spatial(grid, config.spatial)?;
        let mut rng = seeded_rng(stream_seed(config.seed, 0, STREAM_INIT));
        let robot_durations_init = policy.initial_durations(n, config.init_draws, &mut rng)?;
        let reference = match config.human {
            HumanSource::Archetype(a) => {
                let mut rng = seeded_rng(stream_seed(config.seed, 0, STREAM_REFERENCE));
                Some(reference_models(world, a, grid, config.spatial, config.reference_draws, &mut rng)?)
            }
            HumanSource::Live => None,
        };
        Ok(Self {
            history: AllocationHistory::new(n),
            config,
            world,
            policy,
            task_set,
            temporal,
            spatial,
            robot_durations_init,
            reference,
            next_cycle: 0,
        })
    }

    pub fn cycle(&self) -> usize {
        self.next_cycle
    }

    pub fn finished(&self) -> bool {
        self.next_cycle >= self.config.cycles
    }

    /// Optimise the plan for the next cycle against the current beliefs.
    pub fn plan(&self) -> Result<PlannedCycle> {
        let cycle = self.next_cycle;
        let lambda = self.config.lambda.at(cycle, self.config.cycles);
        let mut ga = self.config.ga.clone();
        ga.lambda = lambda;
        let problem = crate::scheduler::Problem {
            task_set: &self.task_set,
            temporal: &self.temporal,
            spatial: &self.spatial,
            policy: self.policy,
            robot_durations_init: &self.robot_durations_init,
            history: &self.history,
        };
        let started = Instant::now();
        let mut rng = seeded_rng(stream_seed(self.config.seed, cycle as u64, STREAM_PLAN));
        let out = optimize(&problem, &ga, &mut rng)?;
        let optimize_ms = started.elapsed().as_secs_f64() * 1e3;
        let plan = out.best;
        if !plan.feasible {
            return Err(Error::InfeasiblePlan);
        }
        let planned = plan.makespan_cost + plan.gamma * plan.spatial_cost;
        let reference = match &self.reference {
            Some(r) => {
                // shared across runs with the same seed so levels compare on common draws
                let mut rng = seeded_rng(stream_seed(self.config.seed, cycle as u64, STREAM_EVAL));
                Some(reference_cost(&plan, &self.task_set, r, ga.gamma, ga.samples, &mut rng)?)
            }
            None => None,
        };
        Ok(PlannedCycle {
            cycle,
            lambda,
            search: SearchStats {
                evaluations: out.evaluations,
                memory_hits: out.memory_hits,
                memory_misses: out.memory_misses,
                fixed_point_capped: plan.fixed_point_capped,
            },
            trace: out.trace,
            planned_cost: planned.is_finite().then_some(planned),
            reference,
            plan,
            optimize_ms,
        })
    }

    /// Fold an executed cycle into the beliefs permitted by the adaptation
    /// level and close the cycle.
    pub fn complete(&mut self, planned: PlannedCycle, obs: &CycleObservation, deploy_ms: f64) -> Result<CycleRecord> {
        self.history.record(&planned.plan.genome);
        if self.config.level.time() {
            for (&t, &d) in &obs.human_durations {
                self.temporal = self.temporal.update(t, d)?;
            }
        }
        if self.config.level.space() {
            for (&t, traj) in &obs.human_trajectories {
                self.spatial.update(t, traj)?;
            }
        }
        Ok(self.close(planned, Some(obs.into()), None, deploy_ms))
    }

    /// Close a cycle whose execution was abandoned; beliefs stay as they were.
    pub fn abort(&mut self, planned: PlannedCycle, reason: String, deploy_ms: f64) -> CycleRecord {
        self.close(planned, None, Some(reason), deploy_ms)
    }

    fn close(
        &mut self,
        planned: PlannedCycle,
        observation: Option<ObservationSummary>,
        aborted: Option<String>,
        deploy_ms: f64,
    ) -> CycleRecord {
        self.next_cycle += 1;
        let dump = self.config.dump_models;
        CycleRecord {
            cycle: planned.cycle,
            lambda: planned.lambda,
            plan: PlanSummary::from(&planned.plan),
            search: planned.search,
            trace: planned.trace,
            planned_cost: planned.planned_cost,
            reference: planned.reference,
            observation,
            aborted,
            models: ModelSnapshot {
                temporal_hash: model_hash(&self.temporal),
                spatial_hash: model_hash(&self.spatial),
                temporal: dump.then(|| self.temporal.clone()),
                spatial: dump.then(|| self.spatial.clone()),
            },
            timings: Timings {
                optimize_ms: planned.optimize_ms,
                deploy_ms,
            },
        }
    }

    /// The frame sent to a live client when a cycle closes.
    pub fn cycle_complete_frame(&self, record: &CycleRecord, obs: Option<&CycleObservation>) -> Frame {
        let estimates = self
            .temporal
            .tasks
            .iter()
            .filter_map(|(t, p)| {
                p.point_estimates()
                    .ok()
                    .map(|(mean, variance)| (*t, DurationEstimate { mean, variance }))
            })
            .collect();
        let heatmaps = self.spatial.fields.iter().map(|(t, f)| (*t, Heatmap::from(f))).collect();
        Frame::CycleComplete {
            cycle: record.cycle as u32,
            costs: CostSummary {
                planned: record.planned_cost,
                makespan: record.plan.makespan_cost,
                spatial: record.plan.spatial_cost,
                diversity: record.plan.diversity_cost,
                realized_makespan: obs.map(|o| o.makespan),
                min_distance: obs.map(|o| o.min_distance).filter(|d| d.is_finite()),
            },
            durations: obs.map(|o| o.human_durations.clone()).unwrap_or_default(),
            estimates,
            heatmaps,
        }
    }
}

/// Run every cycle against a scripted human.
pub fn run(config: &RunConfig, world: &WorldSpec, policy: &dyn MotionPolicy) -> Result<RunLog> {
    let archetype = match config.human {
        HumanSource::Archetype(a) => a,
        HumanSource::Live => {
            return Err(Error::InvalidConfig("live runs are driven by the session service".into()))
        }
    };
    let mut adapter = Adapter::new(config.clone(), world, policy)?;
    let mut log = RunLog::default();
    while !adapter.finished() {
        let planned = adapter.plan()?;
        let started = Instant::now();
        let mut rng = seeded_rng(stream_seed(config.seed, planned.cycle as u64, STREAM_DEPLOY));
        let obs = deploy_archetype(&planned.plan, world, archetype, config.tick, &mut rng)?;
        let deploy_ms = started.elapsed().as_secs_f64() * 1e3;
        log.push(adapter.complete(planned, &obs, deploy_ms)?);
    }
    Ok(log)
}
