//! Experiment configuration: scenario presets, scene splits, noise and
//! corruption settings, curriculum knobs. Loaded from TOML; unknown keys
//! are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptConfig, CurriculumOptions, CurriculumSchedule};
use crate::error::{Error, Result};
use crate::world::{CorruptionSpec, GmmNoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// No corruption; pretraining-condition sanity runs.
    Clean,
    Speckle,
    LowLight,
    LargeScale,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Speckle => "speckle",
            Scenario::LowLight => "low_light",
            Scenario::LargeScale => "large_scale",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Scenario::Clean),
            "speckle" => Ok(Scenario::Speckle),
            "low_light" => Ok(Scenario::LowLight),
            "large_scale" => Ok(Scenario::LargeScale),
            other => Err(Error::ConfigInvalid(format!("unknown scenario {other}"))),
        }
    }

    /// Visual corruption applied in deployment environments.
    pub fn corruption(&self) -> CorruptionSpec {
        match self {
            Scenario::Clean => CorruptionSpec::identity(),
            Scenario::Speckle => CorruptionSpec {
                speckle_sigma: 0.3,
                ..CorruptionSpec::identity()
            },
            Scenario::LowLight => CorruptionSpec {
                lighting_gain: 0.4,
                lighting_bias: -0.02,
                ..CorruptionSpec::identity()
            },
            Scenario::LargeScale => CorruptionSpec {
                scale_factor: 1.5,
                ..CorruptionSpec::identity()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Adapt and evaluate on disjoint scenes.
    Generalization,
    /// Adapt and evaluate on the same scenes with new start poses.
    Specialization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub mode: SplitMode,
    /// Scenes (floorplan seeds) the curriculum runs on.
    pub adapt_seeds: Vec<u64>,
    /// Scenes evaluation runs on.
    pub eval_seeds: Vec<u64>,
    /// Clean scenes the pretraining corpus is collected from.
    pub clean_seeds: Vec<u64>,
    pub episodes_per_scene: usize,
    pub episode_steps: usize,
    /// Clean-corpus collection episodes per clean scene.
    pub clean_episodes_per_scene: usize,
    /// Independent seeds for ablation variance estimates.
    pub ablation_seeds: usize,
    pub master_seed: u64,
    pub act_noise: GmmNoiseModel,
    pub sen_noise: GmmNoiseModel,
    pub schedule: CurriculumSchedule,
    pub weights: AdaptConfig,
    pub curriculum: CurriculumOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Speckle,
            mode: SplitMode::Generalization,
            adapt_seeds: vec![201, 202, 203, 204, 205],
            eval_seeds: vec![301, 302, 303, 304, 305],
            clean_seeds: vec![101, 102, 103],
            episodes_per_scene: 2,
            episode_steps: 500,
            clean_episodes_per_scene: 2,
            ablation_seeds: 3,
            master_seed: 7,
            act_noise: GmmNoiseModel::act_default(),
            sen_noise: GmmNoiseModel::sen_default(),
            schedule: CurriculumSchedule::default(),
            weights: AdaptConfig::default(),
            curriculum: CurriculumOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adapt_seeds.is_empty() || self.eval_seeds.is_empty() {
            return Err(Error::ConfigInvalid("empty scene split".into()));
        }
        if self.episodes_per_scene == 0
            || self.episode_steps == 0
            || self.clean_episodes_per_scene == 0
            || self.ablation_seeds == 0
        {
            return Err(Error::ConfigInvalid("episode counts must be > 0".into()));
        }
        match self.mode {
            SplitMode::Generalization => {
                if self.adapt_seeds.iter().any(|s| self.eval_seeds.contains(s)) {
                    return Err(Error::ConfigInvalid(
                        "generalization requires disjoint adapt/eval scenes".into(),
                    ));
                }
            }
            SplitMode::Specialization => {
                if self.adapt_seeds != self.eval_seeds {
                    return Err(Error::ConfigInvalid(
                        "specialization requires identical adapt/eval scenes".into(),
                    ));
                }
            }
        }
        self.act_noise.validate()?;
        self.sen_noise.validate()?;
        self.schedule.validate()?;
        self.weights.validate()?;
        self.corruption().validate()?;
        Ok(())
    }

    /// Floorplan scale, driven by the scenario.
    pub fn scale_factor(&self) -> f64 {
        self.corruption().scale_factor
    }

    pub fn corruption(&self) -> CorruptionSpec {
        self.scenario.corruption()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
