//! Training objectives: winner-takes-all regression, lane-guided
//! regression for the non-winning modes, hinge scoring and their weighted
//! sum.
//!
//! Mode selections (the WTA winner and each lane's closest non-winner) are
//! hard assignments computed from forward values; gradients flow only
//! through the selected trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sum_all, AutodiffError, Tensor, Var};
use crate::geom::{GeomError, Point2, Polyline};

/// Transition point of the smooth L1 penalty, in meters.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("prediction tensor must be [M, t_f, 2], got {0:?}")]
    PredictionShape(Vec<usize>),
    #[error("scores must be [M] with M = {modes}, got {shape:?}")]
    ScoreShape { modes: usize, shape: Vec<usize> },
    #[error("ground truth has {got} points, predictions have {expected}")]
    Horizon { expected: usize, got: usize },
    #[error("mode index {index} out of range for {modes} modes")]
    ModeIndex { index: usize, modes: usize },
    #[error("no agents to average over")]
    NoAgents,
    #[error("reference lane: {0}")]
    Lane(#[from] GeomError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Differentiable multimodal prediction for one agent.
#[derive(Debug, Clone, Copy)]
pub struct PredictionSet<'t> {
    /// `[M, t_f, 2]` positions.
    pub trajectories: Var<'t>,
    /// `[M]` raw scores; absent for proposals.
    pub scores: Option<Var<'t>>,
}

impl<'t> PredictionSet<'t> {
    pub fn new(trajectories: Var<'t>, scores: Option<Var<'t>>) -> Result<Self, LossError> {
        let shape = trajectories.shape();
        if shape.len() != 3 || shape[2] != 2 || shape[0] == 0 || shape[1] == 0 {
            return Err(LossError::PredictionShape(shape));
        }
        if let Some(s) = scores {
            let ss = s.shape();
            if ss != [shape[0]] {
                return Err(LossError::ScoreShape {
                    modes: shape[0],
                    shape: ss,
                });
            }
        }
        Ok(Self { trajectories, scores })
    }

    pub fn modes(&self) -> usize {
        self.trajectories.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.shape()[1]
    }

    /// Final predicted point of every mode.
    pub fn final_points(&self) -> Vec<Point2> {
        let v = self.trajectories.value();
        let t_f = v.shape()[1];
        v.data()
            .chunks(t_f * 2)
            .map(|mode| Point2::new(mode[2 * t_f - 2], mode[2 * t_f - 1]))
            .collect()
    }

    /// Plain values, `[mode][t]`.
    pub fn trajectory_values(&self) -> Vec<Vec<Point2>> {
        let v = self.trajectories.value();
        let t_f = v.shape()[1];
        v.data()
            .chunks(t_f * 2)
            .map(|mode| mode.chunks(2).map(|p| Point2::new(p[0], p[1])).collect())
            .collect()
    }

    fn mode(&self, m: usize) -> Result<Var<'t>, LossError> {
        let t_f = self.horizon();
        Ok(self.trajectories.gather(0, &[m])?.reshape(&[t_f, 2])?)
    }
}

fn points_tensor(points: &[Point2]) -> Tensor {
    Tensor::new(&[points.len(), 2], points.iter().flat_map(|p| [p.x, p.y]).collect())
        .expect("[n, 2] layout")
}

/// Mean smooth L1 between one mode and a fixed `[t_f, 2]` target.
fn mode_smooth_l1<'t>(pred: &PredictionSet<'t>, m: usize, target: &[Point2]) -> Result<Var<'t>, LossError> {
    let tape = pred.trajectories.tape();
    let target = tape.constant(points_tensor(target));
    Ok(pred.mode(m)?.smooth_l1(target, SMOOTH_L1_BETA)?.reduce_mean())
}

/// Index of the minimum, earliest index on ties.
fn argmin(values: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Winner-takes-all regression. The winner is the mode whose FINAL point
/// is closest to the ground-truth final point; the loss is the mean smooth
/// L1 over all `t_f x 2` coordinates of that mode.
pub fn wta_loss<'t>(pred: &PredictionSet<'t>, gt: &[Point2]) -> Result<(Var<'t>, usize), LossError> {
    let t_f = pred.horizon();
    if gt.len() != t_f {
        return Err(LossError::Horizon {
            expected: t_f,
            got: gt.len(),
        });
    }
    let gt_final = gt[t_f - 1];
    let winner = argmin(
        pred.final_points()
            .into_iter()
            .enumerate()
            .map(|(m, p)| (m, p.distance(gt_final))),
    )
    .expect("at least one mode");
    Ok((mode_smooth_l1(pred, winner, gt)?, winner))
}

#[derive(Debug, Clone)]
pub struct LaneLoss<'t> {
    /// Already divided by the number of lanes.
    pub value: Var<'t>,
    /// Selected mode per lane.
    pub assignments: Vec<usize>,
    /// True when no mode other than the winner exists, or no lanes were given.
    pub skipped: bool,
}

/// Lane-guided regression for the non-winning modes.
///
/// For every lane, the non-winner whose final point has the smallest
/// Frenet normal distance to the lane is pulled toward the lane's `t_f`
/// points by mean smooth L1. Per-lane terms are summed and divided by the
/// lane count. A mode may be selected by several lanes.
pub fn lane_loss<'t>(
    pred: &PredictionSet<'t>,
    lanes: &[Vec<Point2>],
    winner: usize,
) -> Result<LaneLoss<'t>, LossError> {
    let modes = pred.modes();
    let t_f = pred.horizon();
    if winner >= modes {
        return Err(LossError::ModeIndex { index: winner, modes });
    }
    let tape = pred.trajectories.tape();
    if modes == 1 || lanes.is_empty() {
        return Ok(LaneLoss {
            value: tape.scalar(0.0),
            assignments: Vec::new(),
            skipped: true,
        });
    }
    let finals = pred.final_points();
    let mut terms = Vec::with_capacity(lanes.len());
    let mut assignments = Vec::with_capacity(lanes.len());
    for lane in lanes {
        if lane.len() != t_f {
            return Err(LossError::Horizon {
                expected: t_f,
                got: lane.len(),
            });
        }
        let poly = Polyline::new(lane.clone())?;
        let chosen = argmin(
            finals
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != winner)
                .map(|(m, p)| (m, poly.project(*p).n.abs())),
        )
        .expect("at least one non-winner");
        assignments.push(chosen);
        terms.push(mode_smooth_l1(pred, chosen, lane)?);
    }
    let value = sum_all(&terms)?.scale(1.0 / lanes.len() as f64);
    Ok(LaneLoss {
        value,
        assignments,
        skipped: false,
    })
}

/// Hinge scoring: `sum_{m != winner} max(0, p_m + margin - p_winner)`.
pub fn score_loss<'t>(scores: Var<'t>, winner: usize, margin: f64) -> Result<Var<'t>, LossError> {
    let shape = scores.shape();
    if shape.len() != 1 {
        return Err(LossError::ScoreShape {
            modes: shape.first().copied().unwrap_or(0),
            shape,
        });
    }
    let modes = shape[0];
    if winner >= modes {
        return Err(LossError::ModeIndex { index: winner, modes });
    }
    let tape = scores.tape();
    if modes == 1 {
        return Ok(tape.scalar(0.0));
    }
    let others: Vec<usize> = (0..modes).filter(|&m| m != winner).collect();
    let rest = scores.gather(0, &others)?;
    let win = scores.gather(0, &[winner])?;
    let ones = tape.constant(Tensor::filled(&[others.len()], 1.0));
    let win_b = ones.mul_scalar(win)?;
    Ok(rest.hinge(win_b, margin)?.reduce_sum())
}

/// Per-agent regression terms.
#[derive(Debug, Clone)]
pub struct AgentRegression<'t> {
    pub wta: Var<'t>,
    pub lane: LaneLoss<'t>,
    pub winner: usize,
}

/// WTA plus lane loss for one agent. Empty `lanes` reduces to WTA only.
pub fn agent_regression<'t>(
    pred: &PredictionSet<'t>,
    gt: &[Point2],
    lanes: &[Vec<Point2>],
) -> Result<AgentRegression<'t>, LossError> {
    let (wta, winner) = wta_loss(pred, gt)?;
    let lane = lane_loss(pred, lanes, winner)?;
    Ok(AgentRegression { wta, lane, winner })
}

/// Scene regression loss: mean over agents of `L_WTA + L_lane`.
pub fn regression_loss<'t>(
    preds: &[PredictionSet<'t>],
    gts: &[Vec<Point2>],
    lanes: &[Vec<Vec<Point2>>],
) -> Result<Var<'t>, LossError> {
    if preds.is_empty() {
        return Err(LossError::NoAgents);
    }
    let mut per_agent = Vec::with_capacity(preds.len());
    for (i, pred) in preds.iter().enumerate() {
        let agent_lanes = lanes.get(i).map(Vec::as_slice).unwrap_or(&[]);
        let r = agent_regression(pred, &gts[i], agent_lanes)?;
        per_agent.push(r.wta.add(r.lane.value)?);
    }
    Ok(sum_all(&per_agent)?.scale(1.0 / preds.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha_score: f64,
    pub alpha_pred: f64,
    pub alpha_prop: f64,
    pub epsilon_margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_score: 1.0,
            alpha_pred: 1.0,
            alpha_prop: 0.1,
            epsilon_margin: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.alpha_score, self.alpha_pred, self.alpha_prop, self.epsilon_margin];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(format!("loss weights must be finite and non-negative: {self:?}"))
        }
    }
}

/// `alpha_score * score + alpha_pred * pred_reg + alpha_prop * prop_reg`.
/// A missing proposal term (single-stage model) contributes nothing.
pub fn total_loss<'t>(
    score: Var<'t>,
    pred_reg: Var<'t>,
    prop_reg: Option<Var<'t>>,
    weights: &LossWeights,
) -> Result<Var<'t>, LossError> {
    let mut total = score.scale(weights.alpha_score).add(pred_reg.scale(weights.alpha_pred))?;
    if let Some(p) = prop_reg {
        total = total.add(p.scale(weights.alpha_prop))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use approx::assert_abs_diff_eq;

    fn traj_tensor(modes: &[Vec<Point2>]) -> Tensor {
        let t_f = modes[0].len();
        Tensor::new(
            &[modes.len(), t_f, 2],
            modes.iter().flatten().flat_map(|p| [p.x, p.y]).collect(),
        )
        .unwrap()
    }

    fn line(n: usize, dx: f64, dy: f64, off: Point2) -> Vec<Point2> {
        (1..=n).map(|i| Point2::new(i as f64 * dx, i as f64 * dy) + off).collect()
    }

    #[test]
    fn wta_exact_match_and_single_mode() {
        let tape = Tape::new();
        let gt = line(5, 1.0, 0.0, Point2::ZERO);
        let modes = vec![gt.clone(), line(5, 1.0, 0.0, Point2::new(0.0, 3.0))];
        let p = PredictionSet::new(tape.leaf(traj_tensor(&modes)), None).unwrap();
        let (loss, w) = wta_loss(&p, &gt).unwrap();
        assert_eq!(w, 0);
        assert_eq!(loss.item(), 0.0);

        let tape = Tape::new();
        let far = vec![line(5, 1.0, 0.0, Point2::new(50.0, 50.0))];
        let p = PredictionSet::new(tape.leaf(traj_tensor(&far)), None).unwrap();
        assert_eq!(wta_loss(&p, &gt).unwrap().1, 0);
    }

    #[test]
    fn wta_selects_by_final_point_only() {
        // mode 0 tracks gt except the last point; mode 1 is far except the last point
        let gt = line(4, 1.0, 0.0, Point2::ZERO);
        let mut m0 = gt.clone();
        m0[3] = Point2::new(4.0, 2.0);
        let mut m1 = line(4, 1.0, 0.0, Point2::new(0.0, 10.0));
        m1[3] = Point2::new(4.0, 0.5);
        let tape = Tape::new();
        let p = PredictionSet::new(tape.leaf(traj_tensor(&[m0, m1])), None).unwrap();
        assert_eq!(wta_loss(&p, &gt).unwrap().1, 1);
    }

    #[test]
    fn wta_tie_takes_smallest_index() {
        let gt = line(3, 1.0, 0.0, Point2::ZERO);
        let a = line(3, 1.0, 0.0, Point2::new(0.0, 1.0));
        let b = line(3, 1.0, 0.0, Point2::new(0.0, -1.0));
        let tape = Tape::new();
        let p = PredictionSet::new(tape.leaf(traj_tensor(&[a, b])), None).unwrap();
        assert_eq!(wta_loss(&p, &gt).unwrap().1, 0);
    }

    #[test]
    fn lane_loss_exact_and_duplicated_lanes() {
        let lane = line(5, 2.0, 0.5, Point2::ZERO);
        let gt = line(5, 2.0, 0.0, Point2::ZERO);
        let modes = vec![gt.clone(), lane.clone(), line(5, 0.0, 2.0, Point2::ZERO)];
        let tape = Tape::new();
        let p = PredictionSet::new(tape.leaf(traj_tensor(&modes)), None).unwrap();
        let one = lane_loss(&p, &[lane.clone()], 0).unwrap();
        assert_eq!(one.value.item(), 0.0);
        assert_eq!(one.assignments, vec![1]);

        let other_lane = line(5, 1.0, 1.0, Point2::ZERO);
        let single = lane_loss(&p, &[other_lane.clone()], 0).unwrap().value.item();
        let doubled = lane_loss(&p, &[other_lane.clone(), other_lane], 0).unwrap().value.item();
        assert_abs_diff_eq!(single, doubled, epsilon = 1e-15);
        assert!(single > 0.0);
    }

    #[test]
    fn lane_loss_single_mode_flags_skip() {
        let tape = Tape::new();
        let p = PredictionSet::new(tape.leaf(traj_tensor(&[line(3, 1.0, 0.0, Point2::ZERO)])), None).unwrap();
        let l = lane_loss(&p, &[line(3, 1.0, 1.0, Point2::ZERO)], 0).unwrap();
        assert!(l.skipped);
        assert_eq!(l.value.item(), 0.0);
        assert!(lane_loss(&p, &[], 3).is_err());
    }

    #[test]
    fn lane_loss_ignores_winner_gradient() {
        let lane = line(4, 1.0, 1.0, Point2::ZERO);
        let modes = vec![lane.clone(), line(4, 1.0, 0.0, Point2::ZERO)];
        let tape = Tape::new();
        let x = tape.leaf(traj_tensor(&modes));
        let p = PredictionSet::new(x, None).unwrap();
        let l = lane_loss(&p, &[lane], 0).unwrap();
        let g = tape.backward(l.value).unwrap().get(x);
        assert!(g.data()[..8].iter().all(|v| *v == 0.0));
        assert!(g.data()[8..].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn score_loss_cases() {
        let tape = Tape::new();
        let s = tape.leaf(Tensor::vector(vec![0.9, 0.5]));
        assert_eq!(score_loss(s, 0, 0.2).unwrap().item(), 0.0);
        let s = tape.leaf(Tensor::vector(vec![0.5, 0.6]));
        assert_abs_diff_eq!(score_loss(s, 0, 0.2).unwrap().item(), 0.3, epsilon = 1e-12);
        let s = tape.leaf(Tensor::vector(vec![0.5]));
        assert_eq!(score_loss(s, 0, 0.2).unwrap().item(), 0.0);
        assert!(score_loss(s, 1, 0.2).is_err());
    }

    #[test]
    fn regression_fallback_and_averaging() {
        let gt_a = line(3, 1.0, 0.0, Point2::ZERO);
        let gt_b = line(3, 0.0, 1.0, Point2::ZERO);
        let tape = Tape::new();
        let pa = PredictionSet::new(
            tape.leaf(traj_tensor(&[line(3, 1.0, 0.0, Point2::new(0.0, 0.5)), line(3, 1.0, 1.0, Point2::ZERO)])),
            None,
        )
        .unwrap();
        let pb = PredictionSet::new(
            tape.leaf(traj_tensor(&[line(3, 0.0, 1.0, Point2::new(2.0, 0.0)), line(3, -1.0, 0.0, Point2::ZERO)])),
            None,
        )
        .unwrap();
        let wta_a = wta_loss(&pa, &gt_a).unwrap().0.item();
        let wta_b = wta_loss(&pb, &gt_b).unwrap().0.item();
        // no lanes: pure WTA
        let single = regression_loss(&[pa], &[gt_a.clone()], &[]).unwrap().item();
        assert_abs_diff_eq!(single, wta_a, epsilon = 1e-15);
        let both = regression_loss(&[pa, pb], &[gt_a.clone(), gt_b.clone()], &[]).unwrap().item();
        assert_abs_diff_eq!(both, 0.5 * (wta_a + wta_b), epsilon = 1e-15);
        // 0.5 * 0.5^2 = 0.125 per y coordinate, x exact -> mean 0.0625
        assert_abs_diff_eq!(wta_a, 0.0625, epsilon = 1e-15);
        assert!(regression_loss(&[], &[], &[]).is_err());
    }

    #[test]
    fn total_loss_weighting() {
        let tape = Tape::new();
        let w = LossWeights::default();
        let t = total_loss(tape.scalar(1.0), tape.scalar(2.0), Some(tape.scalar(3.0)), &w).unwrap();
        assert_abs_diff_eq!(t.item(), 3.3, epsilon = 1e-12);
        let zero = LossWeights {
            alpha_score: 0.0,
            alpha_pred: 0.0,
            alpha_prop: 0.0,
            epsilon_margin: 0.2,
        };
        let t = total_loss(tape.scalar(1.0), tape.scalar(2.0), Some(tape.scalar(3.0)), &zero).unwrap();
        assert_eq!(t.item(), 0.0);
        assert!(LossWeights { alpha_prop: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn zero_proposal_weight_blocks_gradient() {
        let tape = Tape::new();
        let prop = tape.leaf(Tensor::scalar(3.0));
        let w = LossWeights {
            alpha_prop: 0.0,
            ..LossWeights::default()
        };
        let t = total_loss(tape.scalar(1.0), tape.scalar(2.0), Some(prop.scale(2.0)), &w).unwrap();
        assert_eq!(tape.backward(t).unwrap().get(prop).item(), 0.0);
    }
}
