use crate::{input_error, CliError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use teamplan::adapt::{AblationConfig, AdaptationLevel, RunConfig};
use teamplan::fetch::HumanArchetype;
use teamplan::motion::TrainConfig;

/// The single configuration file, one section per module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub world: PathBuf,
    pub policy: PathBuf,
    pub train: TrainSection,
    pub run: RunConfig,
    pub ablation: AblationSection,
    pub serve: ServeSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            world: PathBuf::from("assets/fetch_world.json"),
            policy: PathBuf::from("assets/policy.json"),
            train: TrainSection::default(),
            run: RunConfig::default(),
            ablation: AblationSection::default(),
            serve: ServeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub demos_per_task: usize,
    pub diffusion: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            demos_per_task: 200,
            diffusion: TrainConfig::default(),
        }
    }
}

/// Ablation grid; every run inherits the `run` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub trials: usize,
    pub archetypes: Vec<HumanArchetype>,
    pub levels: Vec<AdaptationLevel>,
    pub final_cycles: usize,
}

impl Default for AblationSection {
    fn default() -> Self {
        let d = AblationConfig::default();
        Self {
            trials: d.trials,
            archetypes: d.archetypes,
            levels: d.levels,
            final_cycles: d.final_cycles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:7878".into(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| input_error(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Applies `--seed` to every seeded section.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        self.train.diffusion.seed = seed;
    }

    pub fn ablation(&self) -> AblationConfig {
        AblationConfig {
            base: self.run.clone(),
            trials: self.ablation.trials,
            archetypes: self.ablation.archetypes.clone(),
            levels: self.ablation.levels.clone(),
            final_cycles: self.ablation.final_cycles,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: teamplan::Error| input_error(e.to_string());
        self.run.validate().map_err(invalid)?;
        self.ablation().validate().map_err(invalid)?;
        if self.train.demos_per_task < self.train.diffusion.min_demos {
            return Err(input_error(format!(
                "train.demos_per_task {} is below train.diffusion.min_demos {}",
                self.train.demos_per_task, self.train.diffusion.min_demos
            )));
        }
        Ok(())
    }
}
