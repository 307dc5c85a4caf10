use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamState, Checkpoint, Tape, Tensor};
use crate::model::{scene_objective, Model, ModelConfig, ModelError, ObjectiveConfig};
use crate::scenario::scene_seed;

use super::{write_file, HarnessError, PreparedScene, TrainConfig};

pub const TRAIN_CHECKPOINT_FORMAT: &str = "lanetraj-train-v1";

/// Model weights plus optimizer state; enough to resume bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub format: String,
    pub model: ModelConfig,
    pub seed: u64,
    pub epochs_completed: usize,
    pub params: Checkpoint,
    pub adam: AdamState,
}

impl TrainCheckpoint {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.format != TRAIN_CHECKPOINT_FORMAT {
            return Err(HarnessError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_file(path, serde_json::to_string(self)?)
    }

    pub fn to_model(&self) -> Result<Model, HarnessError> {
        let mut model = Model::new(self.model.clone(), self.seed)?;
        model.load_checkpoint(&self.params)?;
        Ok(model)
    }
}

/// Mean per-scene losses over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub batches: usize,
    pub total: f64,
    pub score: f64,
    pub pred: f64,
    pub prop: Option<f64>,
}

pub struct Trainer {
    cfg: TrainConfig,
    model: Model,
    adam: AdamState,
    seed: u64,
    epochs_completed: usize,
}

struct SceneStep {
    grads: Vec<Tensor>,
    total: f64,
    score: f64,
    pred: f64,
    prop: Option<f64>,
}

impl Trainer {
    pub fn new(model: ModelConfig, cfg: TrainConfig) -> Result<Self, HarnessError> {
        let model = Model::new(model, cfg.seed)?;
        let adam = AdamState::new(model.params().tensors());
        Ok(Self {
            seed: cfg.seed,
            cfg,
            model,
            adam,
            epochs_completed: 0,
        })
    }

    /// Continues from a checkpoint. The model config and seed come from the
    /// checkpoint; the schedule and objective from `cfg`.
    pub fn resume(ckpt: &TrainCheckpoint, cfg: TrainConfig) -> Result<Self, HarnessError> {
        let model = ckpt.to_model()?;
        if ckpt.adam.m.len() != model.params().len() {
            return Err(HarnessError::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(Self {
            seed: ckpt.seed,
            cfg,
            model,
            adam: ckpt.adam.clone(),
            epochs_completed: ckpt.epochs_completed,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            format: TRAIN_CHECKPOINT_FORMAT.into(),
            model: self.model.config().clone(),
            seed: self.seed,
            epochs_completed: self.epochs_completed,
            params: self.model.to_checkpoint(),
            adam: self.adam.clone(),
        }
    }

    fn scene_step(&self, scene: &PreparedScene, objective: &ObjectiveConfig) -> Result<SceneStep, HarnessError> {
        let tape = Tape::new();
        let p = self.model.params().bind(&tape);
        let out = self.model.forward(&p, &scene.input)?;
        let loss = scene_objective(self.model.config(), &out, &scene.targets, objective)?;
        let total = loss.total.item();
        let grads = if total.is_finite() {
            let g = tape.backward(loss.total).map_err(ModelError::from)?;
            p.iter().map(|v| g.get(*v)).collect()
        } else {
            Vec::new()
        };
        Ok(SceneStep {
            grads,
            total,
            score: loss.score,
            pred: loss.pred,
            prop: loss.prop,
        })
    }

    /// Visiting order for `epoch`; depends only on the seed and epoch so a
    /// resumed run replays the same batches.
    fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(self.seed ^ 0x0073_6875_6666_6c65, epoch as u64));
        order.shuffle(&mut rng);
        order
    }

    /// One pass over `data` with batch-mean gradients.
    pub fn run_epoch(&mut self, data: &[PreparedScene]) -> Result<EpochLog, HarnessError> {
        if data.is_empty() {
            return Err(HarnessError::Config("empty training set".into()));
        }
        let epoch = self.epochs_completed;
        let adam_cfg = self.cfg.adam(epoch);
        let objective = self.cfg.objective;
        let order = self.epoch_order(epoch, data.len());
        let mut sums = [0.0f64; 4];
        let mut has_prop = false;
        let mut batches = 0;
        for (batch, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let steps = idx
                .par_iter()
                .map(|&i| self.scene_step(&data[i], &objective))
                .collect::<Result<Vec<_>, _>>()?;
            let diverged = steps
                .iter()
                .any(|s| !s.total.is_finite() || s.grads.iter().any(|g| !g.all_finite()));
            if diverged {
                return Err(HarnessError::Divergence {
                    epoch,
                    batch,
                    scenes: idx.iter().map(|&i| data[i].id).collect(),
                });
            }
            let inv = 1.0 / steps.len() as f64;
            let mut grads: Vec<Tensor> = steps[0].grads.clone();
            for s in &steps[1..] {
                for (acc, g) in grads.iter_mut().zip(&s.grads) {
                    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                }
            }
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= inv));
            adam_step(self.model.params_mut().tensors_mut(), &grads, &mut self.adam, &adam_cfg)
                .map_err(ModelError::from)?;
            for s in &steps {
                sums[0] += s.total;
                sums[1] += s.score;
                sums[2] += s.pred;
                if let Some(p) = s.prop {
                    sums[3] += p;
                    has_prop = true;
                }
            }
            batches += 1;
        }
        self.epochs_completed += 1;
        let n = data.len() as f64;
        Ok(EpochLog {
            epoch,
            lr: adam_cfg.lr,
            batches,
            total: sums[0] / n,
            score: sums[1] / n,
            pred: sums[2] / n,
            prop: has_prop.then(|| sums[3] / n),
        })
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn train(
        &mut self,
        data: &[PreparedScene],
        mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<(), HarnessError>,
    ) -> Result<Vec<EpochLog>, HarnessError> {
        let mut logs = Vec::new();
        while self.epochs_completed < self.cfg.epochs {
            let log = self.run_epoch(data)?;
            on_epoch(&log, self)?;
            logs.push(log);
        }
        Ok(logs)
    }
}
