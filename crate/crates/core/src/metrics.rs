//! Evaluation metrics: minADE, minFDE, the lane-coverage metric
//! minLaneFDE, maneuver classification and dataset-level aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{wrap_angle, Point2, Polyline};
use crate::lanegraph::{self, expand_forward, nearby_segments, LaneGraph, SegmentId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("k = {k} must be in 1..={modes}")]
    InvalidK { k: usize, modes: usize },
    #[error("mode {mode} has {got} points, ground truth has {expected}")]
    Horizon { mode: usize, expected: usize, got: usize },
    #[error("forecast needs one score per trajectory ({trajectories} vs {scores})")]
    Scores { trajectories: usize, scores: usize },
}

/// Plain-value multimodal forecast for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub trajectories: Vec<Vec<Point2>>,
    pub scores: Vec<f64>,
}

impl Forecast {
    pub fn new(trajectories: Vec<Vec<Point2>>, scores: Vec<f64>) -> Result<Self, MetricError> {
        if trajectories.len() != scores.len() || trajectories.is_empty() {
            return Err(MetricError::Scores {
                trajectories: trajectories.len(),
                scores: scores.len(),
            });
        }
        Ok(Self { trajectories, scores })
    }

    pub fn modes(&self) -> usize {
        self.trajectories.len()
    }

    /// Indices of the `k` highest scores; ties keep the lower index first.
    pub fn top_k(&self, k: usize) -> Result<Vec<usize>, MetricError> {
        let modes = self.modes();
        if k == 0 || k > modes {
            return Err(MetricError::InvalidK { k, modes });
        }
        let mut idx: Vec<usize> = (0..modes).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        Ok(idx)
    }

    /// Apply a rigid transform to every predicted point.
    pub fn transformed(&self, tf: &crate::geom::RigidTransform) -> Forecast {
        Forecast {
            trajectories: self.trajectories.iter().map(|t| tf.apply_all(t)).collect(),
            scores: self.scores.clone(),
        }
    }
}

fn check_horizon(pred: &Forecast, gt: &[Point2]) -> Result<(), MetricError> {
    for (mode, t) in pred.trajectories.iter().enumerate() {
        if t.len() != gt.len() {
            return Err(MetricError::Horizon {
                mode,
                expected: gt.len(),
                got: t.len(),
            });
        }
    }
    Ok(())
}

/// Minimum over the top-`k` modes of the mean Euclidean point error.
pub fn min_ade(pred: &Forecast, gt: &[Point2], k: usize) -> Result<f64, MetricError> {
    check_horizon(pred, gt)?;
    let top = pred.top_k(k)?;
    Ok(top
        .into_iter()
        .map(|m| {
            let t = &pred.trajectories[m];
            t.iter().zip(gt).map(|(a, b)| a.distance(*b)).sum::<f64>() / gt.len() as f64
        })
        .fold(f64::INFINITY, f64::min))
}

/// Minimum over the top-`k` modes of the final-point Euclidean error.
pub fn min_fde(pred: &Forecast, gt: &[Point2], k: usize) -> Result<f64, MetricError> {
    check_horizon(pred, gt)?;
    let top = pred.top_k(k)?;
    let last = *gt.last().expect("non-empty ground truth");
    Ok(top
        .into_iter()
        .map(|m| pred.trajectories[m].last().unwrap().distance(last))
        .fold(f64::INFINITY, f64::min))
}

/// Average over lanes of the smallest normal distance between a top-`k`
/// final point and the lane. `None` when the agent has no lanes.
pub fn min_lane_fde(pred: &Forecast, lanes: &[Polyline], k: usize) -> Result<Option<f64>, MetricError> {
    let top = pred.top_k(k)?;
    if lanes.is_empty() {
        return Ok(None);
    }
    let total: f64 = lanes
        .iter()
        .map(|lane| {
            top.iter()
                .map(|&m| lane.project(*pred.trajectories[m].last().unwrap()).n.abs())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(Some(total / lanes.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    LeftTurn,
    RightTurn,
    LeftLaneChange,
    RightLaneChange,
}

impl Maneuver {
    pub const ALL: [Maneuver; 5] = [
        Maneuver::Straight,
        Maneuver::LeftTurn,
        Maneuver::RightTurn,
        Maneuver::LeftLaneChange,
        Maneuver::RightLaneChange,
    ];

    pub fn is_turn(self) -> bool {
        matches!(self, Maneuver::LeftTurn | Maneuver::RightTurn)
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, Maneuver::LeftLaneChange | Maneuver::RightLaneChange)
    }

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::LeftTurn => "left_turn",
            Maneuver::RightTurn => "right_turn",
            Maneuver::LeftLaneChange => "left_lane_change",
            Maneuver::RightLaneChange => "right_lane_change",
        }
    }
}

impl std::fmt::Display for Maneuver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub turn_threshold_deg: f64,
    pub lane_change_threshold: f64,
    /// Steps used to estimate the first/last future heading.
    pub heading_window: usize,
    pub search_radius: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            turn_threshold_deg: 30.0,
            lane_change_threshold: 2.5,
            heading_window: 4,
            search_radius: 10.0,
        }
    }
}

/// Labels a ground-truth future.
///
/// Heading change between the first and last future headings above the
/// turn threshold is a turn (positive = left). Otherwise a lateral offset
/// of the final point above the lane-change threshold, measured on the
/// best-aligned initial lane, together with the final point lying on a
/// neighbor of that lane, is a lane change (positive offset = left).
pub fn classify_maneuver(
    graph: &LaneGraph,
    past: &[Point2],
    future: &[Point2],
    cfg: &ClassifierConfig,
) -> Maneuver {
    let n = future.len();
    let w = cfg.heading_window.clamp(1, n.saturating_sub(1).max(1));
    if n > w {
        let first = (future[w] - future[0]).angle();
        let last = (future[n - 1] - future[n - 1 - w]).angle();
        let dtheta = wrap_angle(last - first);
        if dtheta.abs() > cfg.turn_threshold_deg.to_radians() {
            return if dtheta > 0.0 {
                Maneuver::LeftTurn
            } else {
                Maneuver::RightTurn
            };
        }
    }
    let (Some(&pos), Some(&end)) = (past.last(), future.last()) else {
        return Maneuver::Straight;
    };
    let Some(seed) = best_aligned_segment(graph, past, cfg.search_radius) else {
        return Maneuver::Straight;
    };
    let travel: f64 = std::iter::once(pos)
        .chain(future.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| w[0].distance(w[1]))
        .sum();
    let s_seed = graph.segment(seed).unwrap().centerline.project(pos).s;
    let chains = expand_forward(graph, seed, s_seed + travel + 10.0).expect("seed from graph");
    let best = chains
        .iter()
        .map(|c| (c.path.project(end).n, &c.source_ids))
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    let Some((d_lat, ids)) = best else {
        return Maneuver::Straight;
    };
    if d_lat.abs() <= cfg.lane_change_threshold {
        return Maneuver::Straight;
    }
    let neighbors: Vec<SegmentId> = ids
        .iter()
        .flat_map(|id| {
            let s = graph.segment(*id).unwrap();
            [s.left_neighbor, s.right_neighbor]
        })
        .flatten()
        .collect();
    let lands_on_neighbor = nearby_segments(graph, end, cfg.search_radius)
        .first()
        .is_some_and(|id| neighbors.contains(id));
    match (lands_on_neighbor, d_lat > 0.0) {
        (true, true) => Maneuver::LeftLaneChange,
        (true, false) => Maneuver::RightLaneChange,
        (false, _) => Maneuver::Straight,
    }
}

fn best_aligned_segment(graph: &LaneGraph, past: &[Point2], radius: f64) -> Option<SegmentId> {
    let pos = *past.last()?;
    let heading = Point2::from_angle(lanegraph::track_heading(past, 5).unwrap_or(0.0));
    nearby_segments(graph, pos, radius)
        .into_iter()
        .map(|id| {
            let cl = &graph.segment(id).unwrap().centerline;
            let s = cl.project(pos).s;
            let score = cl.direction_at(s).dot(heading) - 0.1 * cl.distance_to(pos);
            (id, score)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverStats {
    pub total: usize,
    pub counts: BTreeMap<Maneuver, usize>,
    pub fractions: BTreeMap<Maneuver, f64>,
}

/// Counts and fractions per maneuver class (all five classes present).
pub fn maneuver_stats<I: IntoIterator<Item = Maneuver>>(labels: I) -> ManeuverStats {
    let mut counts: BTreeMap<Maneuver, usize> = Maneuver::ALL.iter().map(|&m| (m, 0)).collect();
    let mut total = 0;
    for m in labels {
        *counts.get_mut(&m).unwrap() += 1;
        total += 1;
    }
    let fractions = counts
        .iter()
        .map(|(&m, &c)| (m, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    ManeuverStats {
        total,
        counts,
        fractions,
    }
}

/// Metric values for one evaluated agent; `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub maneuver: Maneuver,
    pub values: BTreeMap<String, Option<f64>>,
}

/// Named subset of maneuvers, e.g. the turn subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetFilter {
    pub name: String,
    pub maneuvers: Vec<Maneuver>,
}

impl SubsetFilter {
    pub fn turns() -> Self {
        Self {
            name: "turn".into(),
            maneuvers: vec![Maneuver::LeftTurn, Maneuver::RightTurn],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub count: usize,
    /// Fraction of candidate agents for which the metric was defined.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub count: usize,
    pub coverage: f64,
    pub subsets: BTreeMap<String, Summary>,
}

/// `{metric name -> {mean, count, coverage, subsets}}`.
pub type MetricReport = BTreeMap<String, MetricSummary>;

/// Compensated summation; result independent of chunking for the sizes used here.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn summarize<'a>(records: impl Iterator<Item = &'a AgentRecord>, metric: &str) -> Summary {
    let mut candidates = 0;
    let defined: Vec<f64> = records
        .filter_map(|r| {
            candidates += 1;
            r.values.get(metric).copied().flatten()
        })
        .collect();
    let count = defined.len();
    Summary {
        mean: (count > 0).then(|| neumaier_sum(defined.iter().copied()) / count as f64),
        count,
        coverage: if candidates == 0 {
            0.0
        } else {
            count as f64 / candidates as f64
        },
    }
}

/// Per-metric means over agents, skipping undefined values, with subset
/// breakdowns.
pub fn aggregate(records: &[AgentRecord], subsets: &[SubsetFilter]) -> MetricReport {
    let names: std::collections::BTreeSet<&String> = records.iter().flat_map(|r| r.values.keys()).collect();
    names
        .into_iter()
        .map(|name| {
            let all = summarize(records.iter(), name);
            let subs = subsets
                .iter()
                .map(|f| {
                    let s = summarize(records.iter().filter(|r| f.maneuvers.contains(&r.maneuver)), name);
                    (f.name.clone(), s)
                })
                .collect();
            (
                name.clone(),
                MetricSummary {
                    mean: all.mean,
                    count: all.count,
                    coverage: all.coverage,
                    subsets: subs,
                },
            )
        })
        .collect()
}
