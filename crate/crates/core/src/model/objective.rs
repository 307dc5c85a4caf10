//! Per-scene training targets and the weighted three-term objective.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sum_all, Var};
use crate::geom::Point2;
use crate::lanegraph::{self, extract_reference_lanes, resample_reference, ExtractionConfig, LaneGraph, ResampleRule};
use crate::losses::{agent_regression, score_loss, total_loss, LossWeights, PredictionSet};

use super::{ForwardOutput, ModelConfig, ModelError, SceneInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Maximum reference lanes per agent.
    pub max_lanes: usize,
    pub extraction: ExtractionConfig,
    pub resample: ResampleRule,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            max_lanes: 3,
            extraction: ExtractionConfig::default(),
            resample: ResampleRule::default(),
        }
    }
}

/// Ground truth and reference lanes of one agent in its own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTargets {
    /// `t_f` points; empty when the future is unknown.
    pub future: Vec<Point2>,
    /// Reference lanes resampled to `t_f` points.
    pub lanes: Vec<Vec<Point2>>,
}

/// Reference lanes (and, if given, futures) mapped into each agent's frame.
pub fn prepare_targets(
    model: &ModelConfig,
    cfg: &TargetConfig,
    map: &LaneGraph,
    input: &SceneInput,
    pasts: &[Vec<Point2>],
    futures: Option<&[Vec<Point2>]>,
) -> Vec<AgentTargets> {
    pasts
        .iter()
        .enumerate()
        .map(|(i, past)| {
            let speed = lanegraph::track_speed(past, cfg.resample.dt, 5);
            let travel = (speed * model.t_f as f64 * cfg.resample.dt).max(cfg.resample.min_distance);
            let tf = &input.frames[i];
            let lanes = extract_reference_lanes(map, past, cfg.max_lanes, travel + 5.0, &cfg.extraction)
                .iter()
                .map(|lane| tf.apply_all(&resample_reference(lane, model.t_f, speed, &cfg.resample)))
                .collect();
            let future = futures.map(|f| tf.apply_all(&f[i])).unwrap_or_default();
            AgentTargets { future, lanes }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub weights: LossWeights,
    /// Add the lane-guided term to both regression losses.
    pub lane_loss: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lane_loss: true,
        }
    }
}

pub struct LossBreakdown<'t> {
    pub total: Var<'t>,
    pub score: f64,
    pub pred: f64,
    pub prop: Option<f64>,
}

fn mean<'t>(terms: &[Var<'t>]) -> Result<Var<'t>, ModelError> {
    Ok(sum_all(terms)?.scale(1.0 / terms.len() as f64))
}

/// Scene loss: every term is averaged over agents.
pub fn scene_objective<'t>(
    model: &ModelConfig,
    out: &ForwardOutput<'t>,
    targets: &[AgentTargets],
    cfg: &ObjectiveConfig,
) -> Result<LossBreakdown<'t>, ModelError> {
    let mut scores = Vec::with_capacity(targets.len());
    let mut preds = Vec::with_capacity(targets.len());
    let mut props = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let lanes: &[Vec<Point2>] = if cfg.lane_loss { &t.lanes } else { &[] };
        let set = PredictionSet::new(out.agent_trajectories(model, i)?, Some(out.agent_scores(model, i)?))?;
        let reg = agent_regression(&set, &t.future, lanes)?;
        preds.push(reg.wta.add(reg.lane.value)?);
        scores.push(score_loss(out.agent_scores(model, i)?, reg.winner, cfg.weights.epsilon_margin)?);
        if let Some(z) = out.agent_proposals(model, i)? {
            let r = agent_regression(&PredictionSet::new(z, None)?, &t.future, lanes)?;
            props.push(r.wta.add(r.lane.value)?);
        }
    }
    if targets.is_empty() {
        return Err(ModelError::Input("no agents".into()));
    }
    let score = mean(&scores)?;
    let pred = mean(&preds)?;
    let prop = if props.is_empty() { None } else { Some(mean(&props)?) };
    let total = total_loss(score, pred, prop, &cfg.weights)?;
    Ok(LossBreakdown {
        total,
        score: score.item(),
        pred: pred.item(),
        prop: prop.map(|p| p.item()),
    })
}
