//! Synthetic driving scenes: parametric lane graphs and lane-following
//! agents with a configurable maneuver distribution, stored as JSON lines.

use std::f64::consts::PI;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, RigidTransform};
use crate::lanegraph::{chain_path, LaneGraph, LaneSegment, SegmentId};
use crate::metrics::{classify_maneuver, ClassifierConfig, Maneuver};

pub const SCHEMA_VERSION: u32 = 1;

/// Attempts per scene before giving up on matching the sampled maneuver.
const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("no allowed map family supports {0}")]
    Incompatible(Maneuver),
    #[error("could not realize a {maneuver} scene in {attempts} attempts (seed {seed})")]
    Rejected {
        maneuver: Maneuver,
        attempts: usize,
        seed: u64,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema_version {found}")]
    Schema { line: usize, found: u32 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFamily {
    Corridor,
    Curve,
    TIntersection,
    YIntersection,
    Multilane,
}

impl MapFamily {
    pub const ALL: [MapFamily; 5] = [
        MapFamily::Corridor,
        MapFamily::Curve,
        MapFamily::TIntersection,
        MapFamily::YIntersection,
        MapFamily::Multilane,
    ];

    pub fn supports(self, m: Maneuver) -> bool {
        use Maneuver::*;
        match self {
            MapFamily::Corridor | MapFamily::Curve => m == Straight,
            MapFamily::TIntersection | MapFamily::YIntersection => matches!(m, Straight | LeftTurn | RightTurn),
            MapFamily::Multilane => matches!(m, Straight | LeftLaneChange | RightLaneChange),
        }
    }
}

/// Probability of each maneuver class for the target agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverMix {
    pub straight: f64,
    pub left_turn: f64,
    pub right_turn: f64,
    pub left_lane_change: f64,
    pub right_lane_change: f64,
}

impl Default for ManeuverMix {
    /// Heavily imbalanced mix typical of highway-and-urban driving logs.
    fn default() -> Self {
        Self {
            straight: 0.9275,
            left_turn: 0.0382,
            right_turn: 0.0231,
            left_lane_change: 0.0053,
            right_lane_change: 0.0059,
        }
    }
}

impl ManeuverMix {
    pub fn uniform() -> Self {
        Self {
            straight: 0.2,
            left_turn: 0.2,
            right_turn: 0.2,
            left_lane_change: 0.2,
            right_lane_change: 0.2,
        }
    }

    pub fn weights(&self) -> [(Maneuver, f64); 5] {
        [
            (Maneuver::Straight, self.straight),
            (Maneuver::LeftTurn, self.left_turn),
            (Maneuver::RightTurn, self.right_turn),
            (Maneuver::LeftLaneChange, self.left_lane_change),
            (Maneuver::RightLaneChange, self.right_lane_change),
        ]
    }

    pub fn get(&self, m: Maneuver) -> f64 {
        self.weights().iter().find(|(k, _)| *k == m).unwrap().1
    }

    fn sample(&self, u: f64) -> Maneuver {
        let mut acc = 0.0;
        let w = self.weights();
        for (m, p) in w {
            acc += p;
            if u < acc {
                return m;
            }
        }
        // u landed in the rounding gap at the top; take the last class with mass
        w.iter().rev().find(|(_, p)| *p > 0.0).unwrap().0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub maneuver_mix: ManeuverMix,
    /// Families the generator may draw from.
    pub map_families: Vec<MapFamily>,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Std of additive Gaussian position noise in meters.
    pub noise: f64,
    /// Agents per scene, including the target.
    pub agents: usize,
    pub t_o: usize,
    pub t_f: usize,
    pub dt: f64,
    /// Apply a random rotation and translation to every scene.
    pub random_pose: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            maneuver_mix: ManeuverMix::default(),
            map_families: MapFamily::ALL.to_vec(),
            speed_min: 6.0,
            speed_max: 12.0,
            noise: 0.05,
            agents: 3,
            t_o: 20,
            t_f: 30,
            dt: 0.1,
            random_pose: true,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        let w = self.maneuver_mix.weights();
        if w.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
            return bad("maneuver_mix entries must be finite and non-negative".into());
        }
        let sum: f64 = w.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("maneuver_mix sums to {sum}, expected 1"));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min && self.speed_max <= 20.0) {
            return bad(format!("speed range [{}, {}] must satisfy 0 < min <= max <= 20", self.speed_min, self.speed_max));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be >= 0", self.noise));
        }
        if self.agents == 0 {
            return bad("agents must be >= 1".into());
        }
        if self.t_o < 2 || self.t_f < 2 {
            return bad("t_o and t_f must be >= 2".into());
        }
        if !(self.dt > 0.0) || self.speed_max * self.dt * (self.t_o + self.t_f) as f64 > 100.0 {
            return bad("dt and horizons must keep a trajectory within 100 m".into());
        }
        for (m, p) in w {
            if p > 0.0 && !self.map_families.iter().any(|f| f.supports(m)) {
                return Err(ScenarioError::Incompatible(m));
            }
        }
        Ok(())
    }
}

/// Which branches leave an intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branches {
    pub straight: bool,
    pub left: bool,
    pub right: bool,
}

impl Branches {
    pub fn count(&self) -> usize {
        [self.straight, self.left, self.right].iter().filter(|b| **b).count()
    }
}

/// Optional structural choices; unset fields are drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MapParams {
    pub branches: Option<Branches>,
    pub lanes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub past: Vec<Point2>,
    pub future: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema_version: u32,
    pub id: u64,
    pub family: MapFamily,
    pub map: LaneGraph,
    pub agents: Vec<AgentTrack>,
    pub target: usize,
    pub maneuver: Maneuver,
}

impl Scene {
    pub fn target_track(&self) -> &AgentTrack {
        &self.agents[self.target]
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Scene {
        Scene {
            map: self.map.transformed(tf),
            agents: self
                .agents
                .iter()
                .map(|a| AgentTrack {
                    past: tf.apply_all(&a.past),
                    future: tf.apply_all(&a.future),
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// Seed for scene `index` of a dataset with base seed `seed`.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A drivable path through the layout, in the untransformed frame where
/// the junction (or road midpoint) sits at arc length `junction_s`.
#[derive(Debug, Clone)]
struct Route {
    kind: Maneuver,
    ids: Vec<SegmentId>,
    junction_s: f64,
    turn_end_s: f64,
}

struct Layout {
    graph: LaneGraph,
    routes: Vec<Route>,
}

#[derive(Default)]
struct Builder {
    segments: Vec<LaneSegment>,
}

impl Builder {
    fn add(&mut self, pts: Vec<Point2>) -> SegmentId {
        let id = self.segments.len() as SegmentId + 1;
        self.segments.push(LaneSegment {
            id,
            centerline: crate::geom::Polyline::new(pts).expect("generated centerlines are valid"),
            successors: Vec::new(),
            left_neighbor: None,
            right_neighbor: None,
        });
        id
    }

    fn seg(&mut self, id: SegmentId) -> &mut LaneSegment {
        &mut self.segments[id as usize - 1]
    }

    fn link(&mut self, from: SegmentId, to: SegmentId) {
        self.seg(from).successors.push(to);
    }

    fn length(&self, id: SegmentId) -> f64 {
        self.segments[id as usize - 1].centerline.arclength()
    }

    fn end(&self, id: SegmentId) -> Point2 {
        self.segments[id as usize - 1].centerline.last()
    }

    fn finish(self, routes: Vec<Route>) -> Layout {
        Layout {
            graph: LaneGraph::new(self.segments).expect("generated graphs are consistent"),
            routes,
        }
    }
}

fn line(a: Point2, b: Point2) -> Vec<Point2> {
    vec![a, b]
}

/// Circular arc from `start` with initial `heading`, turning by `angle`
/// (positive = left), sampled about every meter.
fn arc(start: Point2, heading: f64, radius: f64, angle: f64) -> Vec<Point2> {
    let n = ((radius * angle.abs()).ceil() as usize).max(4);
    let sign = angle.signum();
    let center = start + Point2::from_angle(heading).perp() * (sign * radius);
    let phi0 = (start - center).angle();
    (0..=n)
        .map(|i| {
            let phi = phi0 + angle * i as f64 / n as f64;
            center + Point2::from_angle(phi) * radius
        })
        .collect()
}

const APPROACH: f64 = 80.0;
const EXIT: f64 = 70.0;
const LANE_WIDTH: f64 = 3.5;

fn route(b: &Builder, kind: Maneuver, ids: Vec<SegmentId>, turn_ids: usize) -> Route {
    let junction_s = b.length(ids[0]);
    let turn_end_s = ids[..turn_ids].iter().map(|&id| b.length(id)).sum();
    Route {
        kind,
        ids,
        junction_s,
        turn_end_s,
    }
}

fn branches_for(rng: &mut ChaCha8Rng, fixed: Option<Branches>, need: Maneuver, straight_optional_only: bool) -> Branches {
    if let Some(b) = fixed {
        return b;
    }
    if straight_optional_only {
        // Y: both diagonal branches always exist, the middle one is optional
        return Branches {
            straight: need == Maneuver::Straight || rng.random_bool(0.5),
            left: true,
            right: true,
        };
    }
    loop {
        let b = Branches {
            straight: need == Maneuver::Straight || rng.random_bool(0.7),
            left: need == Maneuver::LeftTurn || rng.random_bool(0.7),
            right: need == Maneuver::RightTurn || rng.random_bool(0.7),
        };
        if b.count() >= 2 {
            return b;
        }
    }
}

fn build_layout(family: MapFamily, params: &MapParams, need: Maneuver, rng: &mut ChaCha8Rng) -> Result<Layout, ScenarioError> {
    let o = Point2::ZERO;
    let mut b = Builder::default();
    let mut routes = Vec::new();
    match family {
        MapFamily::Corridor => {
            let s1 = b.add(line(Point2::new(-120.0, 0.0), Point2::new(-40.0, 0.0)));
            let s2 = b.add(line(Point2::new(-40.0, 0.0), Point2::new(40.0, 0.0)));
            let s3 = b.add(line(Point2::new(40.0, 0.0), Point2::new(120.0, 0.0)));
            b.link(s1, s2);
            b.link(s2, s3);
            let mut r = route(&b, Maneuver::Straight, vec![s1, s2, s3], 1);
            r.junction_s = 120.0;
            r.turn_end_s = 120.0;
            routes.push(r);
        }
        MapFamily::Curve => {
            let radius = rng.random_range(100.0..250.0);
            let angle = rng.random_range(10.0f64..25.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = b.add(line(Point2::new(-APPROACH, 0.0), o));
            let c = b.add(arc(o, 0.0, radius, angle));
            let end = b.end(c);
            let e = b.add(line(end, end + Point2::from_angle(angle) * EXIT));
            b.link(a, c);
            b.link(c, e);
            routes.push(route(&b, Maneuver::Straight, vec![a, c, e], 2));
        }
        MapFamily::TIntersection | MapFamily::YIntersection => {
            let is_y = family == MapFamily::YIntersection;
            let br = branches_for(rng, params.branches, need, is_y);
            if br.count() < 2 {
                return Err(ScenarioError::Config(format!("{family:?} needs at least 2 branches")));
            }
            let a = b.add(line(Point2::new(-APPROACH, 0.0), o));
            if br.straight {
                let s = b.add(line(o, Point2::new(EXIT + 10.0, 0.0)));
                b.link(a, s);
                routes.push(route(&b, Maneuver::Straight, vec![a, s], 1));
            }
            let (turn, lr, rr) = if is_y {
                (50f64.to_radians(), 15.0, 15.0)
            } else {
                (90f64.to_radians(), 12.0, 10.0)
            };
            for (present, kind, sign, radius) in [
                (br.left, Maneuver::LeftTurn, 1.0, lr),
                (br.right, Maneuver::RightTurn, -1.0, rr),
            ] {
                if !present {
                    continue;
                }
                let t = b.add(arc(o, 0.0, radius, sign * turn));
                let end = b.end(t);
                let e = b.add(line(end, end + Point2::from_angle(sign * turn) * EXIT));
                b.link(a, t);
                b.link(t, e);
                routes.push(route(&b, kind, vec![a, t, e], 2));
            }
        }
        MapFamily::Multilane => {
            let n = params.lanes.unwrap_or_else(|| rng.random_range(2..=3));
            if n < 2 {
                return Err(ScenarioError::Config("multilane needs at least 2 lanes".into()));
            }
            let mut lanes = Vec::new();
            for j in 0..n {
                let y = LANE_WIDTH * j as f64;
                let s1 = b.add(line(Point2::new(-150.0, y), Point2::new(0.0, y)));
                let s2 = b.add(line(Point2::new(0.0, y), Point2::new(150.0, y)));
                b.link(s1, s2);
                lanes.push([s1, s2]);
            }
            for j in 0..n {
                for k in 0..2 {
                    let id = lanes[j][k];
                    b.seg(id).left_neighbor = (j + 1 < n).then(|| lanes[j + 1][k]);
                    b.seg(id).right_neighbor = (j > 0).then(|| lanes[j - 1][k]);
                }
            }
            for (j, ids) in lanes.iter().enumerate() {
                let mut kinds = vec![Maneuver::Straight];
                if j + 1 < n {
                    kinds.push(Maneuver::LeftLaneChange);
                }
                if j > 0 {
                    kinds.push(Maneuver::RightLaneChange);
                }
                for kind in kinds {
                    routes.push(route(&b, kind, ids.to_vec(), 1));
                }
            }
        }
    }
    Ok(b.finish(routes))
}

/// Builds a lane graph of the given family in its canonical frame: the
/// approach runs along +x and the junction sits at the origin.
pub fn generate_map(family: MapFamily, params: &MapParams, seed: u64) -> Result<LaneGraph, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(build_layout(family, params, Maneuver::Straight, &mut rng)?.graph)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

struct Motion {
    speed: f64,
    s_now: f64,
    /// (start time, duration, signed lateral shift) relative to the current step.
    lane_change: Option<(f64, f64, f64)>,
}

fn trace(graph: &LaneGraph, r: &Route, m: &Motion, cfg: &ScenarioConfig) -> Vec<Point2> {
    let path = chain_path(graph, &r.ids);
    let now = cfg.t_o as isize - 1;
    (0..(cfg.t_o + cfg.t_f) as isize)
        .map(|i| {
            let t = (i - now) as f64 * cfg.dt;
            let s = m.s_now + m.speed * t;
            let p = path.point_at(s);
            match m.lane_change {
                Some((t0, dur, shift)) => p + path.direction_at(s).perp() * (shift * smoothstep((t - t0) / dur)),
                None => p,
            }
        })
        .collect()
}

fn feasible_window(r: &Route, path_len: f64, speed: f64, cfg: &ScenarioConfig) -> (f64, f64) {
    let past = speed * cfg.dt * cfg.t_o as f64 + 1.0;
    let fut = speed * cfg.dt * cfg.t_f as f64 + 1.0;
    let lo = past.max(r.junction_s - 40.0);
    let hi = (path_len - fut).min(r.junction_s + 20.0);
    (lo, hi.max(lo))
}

fn sample_motion(graph: &LaneGraph, r: &Route, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, as_target: bool) -> Motion {
    let speed = rng.random_range(cfg.speed_min..=cfg.speed_max);
    let path_len = chain_path(graph, &r.ids).arclength();
    let (lo, hi) = feasible_window(r, path_len, speed, cfg);
    let horizon = speed * cfg.dt * cfg.t_f as f64;
    let s_now = match r.kind {
        Maneuver::LeftTurn | Maneuver::RightTurn if as_target => {
            // reach the junction early enough to sweep most of the turn
            let window = speed * cfg.dt * 4.0;
            let max_gap = (horizon - window - 0.75 * (r.turn_end_s - r.junction_s)).max(0.5);
            r.junction_s - rng.random_range(0.0..max_gap)
        }
        _ => rng.random_range(lo..=hi),
    };
    let lane_change = match r.kind {
        Maneuver::LeftLaneChange | Maneuver::RightLaneChange if as_target => {
            let horizon_t = cfg.dt * cfg.t_f as f64;
            let t0 = rng.random_range(0.0..=0.5f64.min(horizon_t * 0.15));
            let dur = rng.random_range(1.5..=2.5f64).min(horizon_t - t0 - cfg.dt);
            let sign = if r.kind == Maneuver::LeftLaneChange { 1.0 } else { -1.0 };
            Some((t0, dur, sign * LANE_WIDTH))
        }
        _ => None,
    };
    Motion {
        speed,
        s_now,
        lane_change,
    }
}

fn split(points: Vec<Point2>, t_o: usize) -> AgentTrack {
    let mut past = points;
    let future = past.split_off(t_o);
    AgentTrack { past, future }
}

/// One scene with a target agent performing a maneuver drawn from the mix.
///
/// The maneuver is drawn first, then a compatible family and geometry. A
/// candidate is accepted once the classifier applied to its noisy ground
/// truth agrees with the drawn maneuver.
pub fn generate_scene(cfg: &ScenarioConfig, seed: u64) -> Result<Scene, ScenarioError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maneuver = cfg.maneuver_mix.sample(rng.random::<f64>());
    let families: Vec<MapFamily> = cfg.map_families.iter().copied().filter(|f| f.supports(maneuver)).collect();
    if families.is_empty() {
        return Err(ScenarioError::Incompatible(maneuver));
    }
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite std");
    let classifier = ClassifierConfig::default();

    for _ in 0..MAX_ATTEMPTS {
        let family = families[rng.random_range(0..families.len())];
        let layout = build_layout(family, &MapParams::default(), maneuver, &mut rng)?;
        let candidates: Vec<&Route> = layout.routes.iter().filter(|r| r.kind == maneuver).collect();
        let Some(&target_route) = candidates.get(rng.random_range(0..candidates.len().max(1))) else {
            continue;
        };
        let mut tracks = Vec::with_capacity(cfg.agents);
        let m = sample_motion(&layout.graph, target_route, cfg, &mut rng, true);
        tracks.push(trace(&layout.graph, target_route, &m, cfg));

        let straight: Vec<&Route> = layout.routes.iter().filter(|r| r.kind == Maneuver::Straight).collect();
        let others: Vec<&Route> = if straight.is_empty() {
            layout.routes.iter().filter(|r| !r.kind.is_lane_change()).collect()
        } else {
            straight
        };
        for _ in 1..cfg.agents {
            let r = others[rng.random_range(0..others.len())];
            let m = sample_motion(&layout.graph, r, cfg, &mut rng, false);
            tracks.push(trace(&layout.graph, r, &m, cfg));
        }
        if cfg.noise > 0.0 {
            for t in tracks.iter_mut() {
                for p in t.iter_mut() {
                    p.x += noise.sample(&mut rng);
                    p.y += noise.sample(&mut rng);
                }
            }
        }
        let agents: Vec<AgentTrack> = tracks.into_iter().map(|t| split(t, cfg.t_o)).collect();
        let label = classify_maneuver(&layout.graph, &agents[0].past, &agents[0].future, &classifier);
        if label != maneuver {
            continue;
        }
        let mut scene = Scene {
            schema_version: SCHEMA_VERSION,
            id: seed,
            family,
            map: layout.graph,
            agents,
            target: 0,
            maneuver,
        };
        if cfg.random_pose {
            let theta = rng.random_range(-PI..PI);
            let t = Point2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
            scene = scene.transformed(&RigidTransform::new(theta, t));
        }
        return Ok(scene);
    }
    Err(ScenarioError::Rejected {
        maneuver,
        attempts: MAX_ATTEMPTS,
        seed,
    })
}

/// `count` scenes with ids `scene_seed(cfg.seed, i)`, generated in parallel
/// and returned in index order.
pub fn generate_dataset(cfg: &ScenarioConfig, count: usize) -> Result<Vec<Scene>, ScenarioError> {
    generate_range(cfg, 0..count as u64)
}

/// Scenes for the given index range, in order.
pub fn generate_range(cfg: &ScenarioConfig, range: std::ops::Range<u64>) -> Result<Vec<Scene>, ScenarioError> {
    cfg.validate()?;
    range
        .into_par_iter()
        .map(|i| generate_scene(cfg, scene_seed(cfg.seed, i)))
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, scenes: &[Scene]) -> Result<(), ScenarioError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for s in scenes {
        serde_json::to_writer(&mut w, s).expect("scenes serialize");
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Scene>, ScenarioError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_scene(&line, i + 1)?);
    }
    Ok(out)
}

/// Parses one JSONL record; `line` is 1-based and only used in errors.
pub fn parse_scene(text: &str, line: usize) -> Result<Scene, ScenarioError> {
    let scene: Scene = serde_json::from_str(text).map_err(|source| ScenarioError::Parse { line, source })?;
    if scene.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Schema {
            line,
            found: scene.schema_version,
        });
    }
    Ok(scene)
}
