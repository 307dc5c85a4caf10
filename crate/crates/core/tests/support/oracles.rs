//! Brute-force reference implementations written independently of the
//! library, plus random small instances to compare them on.

use lanetraj::autodiff::{Tape, Tensor};
use lanetraj::geom::{Point2, Polyline};
use lanetraj::losses::{lane_loss, score_loss, wta_loss, PredictionSet};
use lanetraj::metrics::{min_ade, min_fde, min_lane_fde, Forecast};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::random_track;

#[derive(Debug, Clone)]
pub struct Instance {
    pub pred: Vec<Vec<Point2>>,
    pub scores: Vec<f64>,
    pub gt: Vec<Point2>,
    pub lanes: Vec<Vec<Point2>>,
}

impl Instance {
    pub fn modes(&self) -> usize {
        self.pred.len()
    }

    pub fn forecast(&self) -> Forecast {
        Forecast::new(self.pred.clone(), self.scores.clone()).unwrap()
    }

    pub fn lane_polylines(&self) -> Vec<Polyline> {
        self.lanes.iter().map(|l| Polyline::new(l.clone()).unwrap()).collect()
    }
}

/// M <= 6 modes, L <= 3 lanes, t_f <= 10 steps.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..=6);
    let l = rng.random_range(0..=3);
    let t_f = rng.random_range(2..=10);
    Instance {
        pred: (0..m).map(|_| random_track(rng, t_f, 6.0)).collect(),
        scores: (0..m).map(|_| rng.random_range(-3.0..3.0)).collect(),
        gt: random_track(rng, t_f, 6.0),
        lanes: (0..l).map(|_| random_track(rng, t_f, 6.0)).collect(),
    }
}

pub fn bf_smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Mean smooth L1 over both coordinates of every step.
pub fn bf_traj_smooth_l1(a: &[Point2], b: &[Point2]) -> f64 {
    let mut total = 0.0;
    for (p, q) in a.iter().zip(b) {
        total += bf_smooth_l1(p.x - q.x) + bf_smooth_l1(p.y - q.y);
    }
    total / (2 * a.len()) as f64
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Endpoint distances, plus the perpendicular distance when the foot of
/// the perpendicular falls inside the segment.
pub fn bf_segment_distance(q: Point2, a: Point2, b: Point2) -> f64 {
    let mut best = dist(q, a).min(dist(q, b));
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let len = (ux * ux + uy * uy).sqrt();
    if len > 0.0 {
        let along = ((q.x - a.x) * ux + (q.y - a.y) * uy) / len;
        if along > 0.0 && along < len {
            let perp = ((q.x - a.x) * uy - (q.y - a.y) * ux).abs() / len;
            best = best.min(perp);
        }
    }
    best
}

pub fn bf_polyline_distance(q: Point2, pts: &[Point2]) -> f64 {
    pts.windows(2)
        .map(|w| bf_segment_distance(q, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

fn first_min(values: impl IntoIterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, v) in values {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Indices of the `k` highest scores; equal scores keep index order.
pub fn bf_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn bf_min_ade(inst: &Instance, k: usize) -> f64 {
    bf_top_k(&inst.scores, k)
        .into_iter()
        .map(|m| inst.pred[m].iter().zip(&inst.gt).map(|(a, b)| dist(*a, *b)).sum::<f64>() / inst.gt.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

pub fn bf_min_fde(inst: &Instance, k: usize) -> f64 {
    let g = *inst.gt.last().unwrap();
    bf_top_k(&inst.scores, k)
        .into_iter()
        .map(|m| dist(*inst.pred[m].last().unwrap(), g))
        .fold(f64::INFINITY, f64::min)
}

pub fn bf_min_lane_fde(inst: &Instance, k: usize) -> Option<f64> {
    if inst.lanes.is_empty() {
        return None;
    }
    let top = bf_top_k(&inst.scores, k);
    let sum: f64 = inst
        .lanes
        .iter()
        .map(|lane| {
            top.iter()
                .map(|&m| bf_polyline_distance(*inst.pred[m].last().unwrap(), lane))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Some(sum / inst.lanes.len() as f64)
}

pub fn bf_wta(inst: &Instance) -> (f64, usize) {
    let g = *inst.gt.last().unwrap();
    let w = first_min(inst.pred.iter().enumerate().map(|(m, t)| (m, dist(*t.last().unwrap(), g))));
    (bf_traj_smooth_l1(&inst.pred[w], &inst.gt), w)
}

pub fn bf_lane_loss(inst: &Instance, winner: usize) -> f64 {
    if inst.modes() == 1 || inst.lanes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for lane in &inst.lanes {
        let chosen = first_min(
            inst.pred
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != winner)
                .map(|(m, t)| (m, bf_polyline_distance(*t.last().unwrap(), lane))),
        );
        total += bf_traj_smooth_l1(&inst.pred[chosen], lane);
    }
    total / inst.lanes.len() as f64
}

pub fn bf_score_loss(scores: &[f64], winner: usize, margin: f64) -> f64 {
    (0..scores.len())
        .filter(|&m| m != winner)
        .map(|m| (scores[m] + margin - scores[winner]).max(0.0))
        .sum()
}

pub fn pred_tensor(pred: &[Vec<Point2>]) -> Tensor {
    let t_f = pred[0].len();
    Tensor::new(&[pred.len(), t_f, 2], pred.iter().flatten().flat_map(|p| [p.x, p.y]).collect()).unwrap()
}

#[derive(Debug, Default, Clone)]
pub struct OracleReport {
    pub instances: usize,
    /// Largest absolute difference per checked function.
    pub worst: Vec<(&'static str, f64)>,
    pub mismatched_selections: usize,
}

impl OracleReport {
    fn note(&mut self, name: &'static str, err: f64) {
        match self.worst.iter_mut().find(|(n, _)| *n == name) {
            Some((_, w)) => *w = w.max(err),
            None => self.worst.push((name, err)),
        }
    }

    pub fn max_error(&self) -> f64 {
        self.worst.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Compares library results with the brute-force versions on `count` instances.
pub fn run(count: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::default();
    for _ in 0..count {
        let inst = random_instance(rng);
        let f = inst.forecast();
        let polys = inst.lane_polylines();
        for k in 1..=inst.modes() {
            rep.note("min_ade", (min_ade(&f, &inst.gt, k).unwrap() - bf_min_ade(&inst, k)).abs());
            rep.note("min_fde", (min_fde(&f, &inst.gt, k).unwrap() - bf_min_fde(&inst, k)).abs());
            let lib = min_lane_fde(&f, &polys, k).unwrap();
            match (lib, bf_min_lane_fde(&inst, k)) {
                (Some(a), Some(b)) => rep.note("min_lane_fde", (a - b).abs()),
                (None, None) => rep.note("min_lane_fde", 0.0),
                _ => rep.note("min_lane_fde", f64::INFINITY),
            }
        }
        let tape = Tape::new();
        let set = PredictionSet::new(tape.constant(pred_tensor(&inst.pred)), None).unwrap();
        let (wta, winner) = wta_loss(&set, &inst.gt).unwrap();
        let (bf_value, bf_winner) = bf_wta(&inst);
        if winner != bf_winner {
            rep.mismatched_selections += 1;
        }
        rep.note("wta_loss", (wta.item() - bf_value).abs());
        let lane = lane_loss(&set, &inst.lanes, winner).unwrap();
        rep.note("lane_loss", (lane.value.item() - bf_lane_loss(&inst, winner)).abs());
        let scores = tape.constant(Tensor::vector(inst.scores.clone()));
        let s = score_loss(scores, winner, 0.2).unwrap();
        rep.note("score_loss", (s.item() - bf_score_loss(&inst.scores, winner, 0.2)).abs());
        rep.instances += 1;
    }
    rep
}

/// Dense-search distance from `q` to a polyline sampled at `samples`
/// evenly spaced arc-length positions (vertices included).
pub fn dense_distance(poly: &Polyline, q: Point2, samples: usize) -> f64 {
    let len = poly.arclength();
    let mut best = poly.points().iter().map(|p| dist(*p, q)).fold(f64::INFINITY, f64::min);
    for i in 0..samples {
        let s = len * i as f64 / (samples - 1) as f64;
        best = best.min(dist(poly.point_at(s), q));
    }
    best
}

/// Projection distance against dense search on `count` random polylines.
/// Returns the worst error relative to `max(distance, 1)`.
pub fn projection_vs_dense(count: usize, queries: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = rng.random_range(2..=12);
        let poly = Polyline::new(random_track(rng, n, 10.0)).unwrap();
        for _ in 0..queries {
            let q = Point2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
            let exact = poly.project(q).n.abs();
            let dense = dense_distance(&poly, q, samples);
            let err = (exact - dense).abs() / dense.max(1.0);
            // the exact projection can never be farther than any sample
            let err = if exact > dense + 1e-12 { f64::INFINITY } else { err };
            worst = worst.max(err);
        }
    }
    worst
}
