//! Tape-independent scene preprocessing: per-agent frames, history
//! features, lane pieces and attention neighborhoods.

use crate::autodiff::Tensor;
use crate::geom::{Point2, Polyline, RigidTransform};
use crate::lanegraph::{self, LaneGraph};

use super::{ModelConfig, ModelError};

/// Model-ready view of one scene. Every agent gets its own frame: origin
/// at its current position, +x along its recent heading.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub agents: usize,
    /// World to agent-local transforms.
    pub frames: Vec<RigidTransform>,
    pub headings: Vec<f64>,
    /// `[agents, t_o, 4]`: local position / coord_scale and per-step displacement.
    pub history: Tensor,
    /// `[pairs, 2 * lane_points]`: lane piece points in the owning agent's frame.
    pub lane_features: Option<Tensor>,
    /// Rows of `lane_features` visible to each agent.
    pub lane_rows: Vec<Vec<usize>>,
    /// Source agent of every agent-agent pair.
    pub pair_source: Vec<usize>,
    /// `[pairs, 4]`: source position / coord_scale and relative heading (cos, sin).
    pub pair_geometry: Option<Tensor>,
    pub pair_rows: Vec<Vec<usize>>,
}

/// Lane centerline pieces of bounded length, each sampled at `points` locations.
pub fn lane_pieces(map: &LaneGraph, piece_length: f64, points: usize) -> Vec<Polyline> {
    let mut out = Vec::new();
    for seg in map.segments() {
        let cl = &seg.centerline;
        let len = cl.arclength();
        let count = (len / piece_length).ceil().max(1.0) as usize;
        for i in 0..count {
            let (a, b) = (len * i as f64 / count as f64, len * (i + 1) as f64 / count as f64);
            let piece = if count == 1 {
                cl.clone()
            } else {
                cl.truncate_by_arclength(a, b).expect("piece inside centerline")
            };
            let pts = piece.sample_uniform(points).expect("points >= 2");
            out.push(Polyline::new(pts).expect("non-degenerate piece"));
        }
    }
    out
}

impl SceneInput {
    pub fn new(cfg: &ModelConfig, map: &LaneGraph, pasts: &[Vec<Point2>]) -> Result<Self, ModelError> {
        if pasts.is_empty() {
            return Err(ModelError::Input("scene has no agents".into()));
        }
        let n = pasts.len();
        let mut frames = Vec::with_capacity(n);
        let mut headings = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut history = Vec::with_capacity(n * cfg.t_o * 4);
        for (i, past) in pasts.iter().enumerate() {
            if past.len() != cfg.t_o {
                return Err(ModelError::Input(format!("agent {i}: {} past points, expected {}", past.len(), cfg.t_o)));
            }
            if past.iter().any(|p| !p.is_finite()) {
                return Err(ModelError::Input(format!("agent {i}: non-finite past")));
            }
            let origin = *past.last().unwrap();
            let heading = lanegraph::track_heading(past, 5).unwrap_or(0.0);
            let tf = RigidTransform::into_frame(origin, heading);
            let local = tf.apply_all(past);
            for (t, p) in local.iter().enumerate() {
                let d = if t == 0 { Point2::ZERO } else { *p - local[t - 1] };
                history.extend_from_slice(&[p.x / cfg.coord_scale, p.y / cfg.coord_scale, d.x, d.y]);
            }
            frames.push(tf);
            headings.push(heading);
            origins.push(origin);
        }
        let history = Tensor::new(&[n, cfg.t_o, 4], history)?;

        let pieces = lane_pieces(map, cfg.lane_piece_length, cfg.lane_points);
        let mut lane_data = Vec::new();
        let mut lane_rows = vec![Vec::new(); n];
        let mut rows = 0;
        for i in 0..n {
            for piece in &pieces {
                if piece.distance_to(origins[i]) > cfg.lane_radius {
                    continue;
                }
                for p in frames[i].apply_all(piece.points()) {
                    lane_data.extend_from_slice(&[p.x / cfg.coord_scale, p.y / cfg.coord_scale]);
                }
                lane_rows[i].push(rows);
                rows += 1;
            }
        }
        let lane_features = (rows > 0)
            .then(|| Tensor::new(&[rows, 2 * cfg.lane_points], lane_data))
            .transpose()?;

        let mut pair_source = Vec::new();
        let mut pair_data = Vec::new();
        let mut pair_rows = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i == j || origins[i].distance(origins[j]) > cfg.agent_radius {
                    continue;
                }
                let rel = frames[i].apply(origins[j]);
                let dh = headings[j] - headings[i];
                pair_data.extend_from_slice(&[rel.x / cfg.coord_scale, rel.y / cfg.coord_scale, dh.cos(), dh.sin()]);
                pair_rows[i].push(pair_source.len());
                pair_source.push(j);
            }
        }
        let pair_geometry = (!pair_source.is_empty())
            .then(|| Tensor::new(&[pair_source.len(), 4], pair_data))
            .transpose()?;

        Ok(Self {
            agents: n,
            frames,
            headings,
            history,
            lane_features,
            lane_rows,
            pair_source,
            pair_geometry,
            pair_rows,
        })
    }
}
