#![allow(dead_code)]

use std::path::PathBuf;
use teamplan::domain::{AllocationHistory, TaskSet};
use teamplan::fetch::{generate_demonstrations, WorldSpec};
use teamplan::motion::{DiffusionPolicy, LibraryPolicy, MotionPolicy};
use teamplan::scheduler::Problem;
use teamplan::seeded_rng;
use teamplan::spatial::{GridSpec, SpatialModel, SpatialParams};
use teamplan::temporal::TemporalModel;

pub fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn world() -> WorldSpec {
    WorldSpec::load(assets().join("fetch_world.json")).unwrap()
}

pub fn diffusion() -> DiffusionPolicy {
    DiffusionPolicy::load(assets().join("policy.json")).unwrap()
}

pub fn library(world: &WorldSpec, candidates: usize) -> LibraryPolicy {
    let demos = generate_demonstrations(world, 20, &mut seeded_rng(11)).unwrap();
    LibraryPolicy::new(world.motion_context(), &demos, 0.01, candidates)
}

/// Owned inputs for a scheduling problem on the fetch world.
pub struct Fixture {
    pub task_set: TaskSet,
    pub temporal: TemporalModel,
    pub spatial: SpatialModel,
    pub policy: Box<dyn MotionPolicy>,
    pub robot_init: Vec<f64>,
    pub history: AllocationHistory,
}

impl Fixture {
    pub fn new(world: &WorldSpec, policy: Box<dyn MotionPolicy>) -> Self {
        let task_set = world.task_set().unwrap();
        let n = task_set.len();
        let robot_init = policy.initial_durations(n, 5, &mut seeded_rng(0)).unwrap();
        Self {
            temporal: world.prior_temporal(0.25).unwrap(),
            spatial: world.prior_spatial(GridSpec::unit(20, 20), SpatialParams::default()).unwrap(),
            history: AllocationHistory::new(n),
            task_set,
            policy,
            robot_init,
        }
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem {
            task_set: &self.task_set,
            temporal: &self.temporal,
            spatial: &self.spatial,
            policy: self.policy.as_ref(),
            robot_durations_init: &self.robot_init,
            history: &self.history,
        }
    }
}
