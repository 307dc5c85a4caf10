//! Dataset generation, training, evaluation, ablation and plotting on top of
//! the core modules. The CLI in `main.rs` is a thin layer over this.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::Maneuver;
use crate::model::{prepare_targets, AgentTargets, ModelConfig, ModelError, SceneInput, TargetConfig};
use crate::scenario::{generate_range, Scene, ScenarioConfig, ScenarioError};

mod ablate;
mod config;
mod eval;
mod plot;
mod train;

pub use ablate::{run_ablation, AblationReport, AblationRow, Variant, VARIANTS};
pub use config::{AblateConfig, Config, DataConfig, EvalConfig, PlotConfig, TrainConfig, OUT_DIR_ENV};
pub use eval::{evaluate, metric_key, EvalReport, TURN_SUBSET};
pub use plot::render_svg;
pub use train::{EpochLog, TrainCheckpoint, Trainer, TRAIN_CHECKPOINT_FORMAT};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch} (scenes {scenes:?})")]
    Divergence {
        epoch: usize,
        batch: usize,
        scenes: Vec<u64>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

/// Model inputs and targets of one scene, computed once before training.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub id: u64,
    pub target: usize,
    pub maneuver: Maneuver,
    pub input: SceneInput,
    pub targets: Vec<AgentTargets>,
}

pub fn prepare_scene(model: &ModelConfig, targets: &TargetConfig, scene: &Scene) -> Result<PreparedScene, HarnessError> {
    let pasts: Vec<_> = scene.agents.iter().map(|a| a.past.clone()).collect();
    let futures: Vec<_> = scene.agents.iter().map(|a| a.future.clone()).collect();
    if pasts.iter().any(|p| p.len() != model.t_o) || futures.iter().any(|f| f.len() != model.t_f) {
        return Err(HarnessError::Config(format!(
            "scene {} horizons do not match model t_o={} t_f={}",
            scene.id, model.t_o, model.t_f
        )));
    }
    let input = SceneInput::new(model, &scene.map, &pasts)?;
    let targets = prepare_targets(model, targets, &scene.map, &input, &pasts, Some(&futures));
    Ok(PreparedScene {
        id: scene.id,
        target: scene.target,
        maneuver: scene.maneuver,
        input,
        targets,
    })
}

pub fn prepare_scenes(model: &ModelConfig, targets: &TargetConfig, scenes: &[Scene]) -> Result<Vec<PreparedScene>, HarnessError> {
    scenes.par_iter().map(|s| prepare_scene(model, targets, s)).collect()
}

/// Training split: indices `0..train_scenes` of `scenario.seed`.
pub fn train_split(scenario: &ScenarioConfig, data: &DataConfig) -> Result<Vec<Scene>, HarnessError> {
    Ok(generate_range(scenario, 0..data.train_scenes as u64)?)
}

/// Evaluation split: the `eval_scenes` indices following the training split.
pub fn eval_split(scenario: &ScenarioConfig, data: &DataConfig) -> Result<Vec<Scene>, HarnessError> {
    let start = data.train_scenes as u64;
    Ok(generate_range(scenario, start..start + data.eval_scenes as u64)?)
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    // write-then-rename so an interrupted run never leaves a torn file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
