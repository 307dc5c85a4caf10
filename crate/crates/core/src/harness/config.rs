use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::model::{ModelConfig, ObjectiveConfig, TargetConfig};
use crate::scenario::ScenarioConfig;

use super::HarnessError;

/// Environment variable that overrides `out_dir` from the config file.
pub const OUT_DIR_ENV: &str = "LANETRAJ_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub targets: TargetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub plot: PlotConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            scenario: ScenarioConfig::default(),
            model: ModelConfig {
                d: 32,
                ..ModelConfig::default()
            },
            targets: TargetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training scenes use indices `0..train_scenes`, evaluation scenes the
    /// next `eval_scenes` indices of the same seed.
    pub train_scenes: usize,
    pub eval_scenes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_scenes: 5000,
            eval_scenes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Model initialization and shuffling seed.
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// First epoch (0-based) trained at the decayed rate.
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            lr: adam.lr,
            lr_decay_epoch: 16,
            lr_decay_factor: 0.1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * self.lr_decay_factor
        } else {
            self.lr
        }
    }

    pub fn adam(&self, epoch: usize) -> AdamConfig {
        AdamConfig {
            lr: self.lr_at(epoch),
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: vec![6, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub seeds: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { seeds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Evaluation-scene positions to draw.
    pub scenes: Vec<usize>,
    /// Pixels per meter.
    pub scale: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            scenes: vec![0, 1, 2, 3],
            scale: 8.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Config = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |m: String| Err(HarnessError::Config(m));
        self.scenario.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train
            .objective
            .weights
            .validate()
            .map_err(HarnessError::Config)?;
        if self.scenario.t_o != self.model.t_o || self.scenario.t_f != self.model.t_f {
            return cfg_err(format!(
                "scenario horizons ({}, {}) differ from model horizons ({}, {})",
                self.scenario.t_o, self.scenario.t_f, self.model.t_o, self.model.t_f
            ));
        }
        if self.train.batch_size == 0 {
            return cfg_err("train.batch_size must be >= 1".into());
        }
        if !(self.train.lr > 0.0 && self.train.lr_decay_factor > 0.0) {
            return cfg_err("train.lr and train.lr_decay_factor must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.iter().any(|&k| k == 0 || k > self.model.modes) {
            return cfg_err(format!("eval.ks must be within 1..={}", self.model.modes));
        }
        if self.targets.max_lanes == 0 {
            return cfg_err("targets.max_lanes must be >= 1".into());
        }
        if self.ablate.seeds == 0 {
            return cfg_err("ablate.seeds must be >= 1".into());
        }
        if !(self.plot.scale > 0.0) {
            return cfg_err("plot.scale must be positive".into());
        }
        Ok(())
    }

    /// Applies the output-directory environment override.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
    }

    /// Writes the resolved config as `<out_dir>/<command>.config.toml`.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| HarnessError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(format!("{command}.config.toml"));
        std::fs::write(&path, self.to_toml()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}
