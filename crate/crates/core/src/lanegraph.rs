//! Lane graph model and reference-lane extraction.
//!
//! A [`LaneGraph`] is a directed graph of lane segments. Each segment owns
//! a centerline polyline, a list of successor segments and optional
//! left/right neighbors. Reference lanes are successor chains clipped to
//! start at the agent's projected position; they serve as pseudo ground
//! truth for the lane loss and as anchors for the lane-coverage metric.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, Point2, Polyline};

pub type SegmentId = u32;

#[derive(Debug, Error)]
pub enum LaneGraphError {
    #[error("duplicate segment id {0}")]
    DuplicateId(SegmentId),
    #[error("segment {from} references missing segment {to} ({kind})")]
    DanglingReference {
        from: SegmentId,
        to: SegmentId,
        kind: &'static str,
    },
    #[error("segment {id} has an invalid centerline: {source}")]
    Centerline { id: SegmentId, source: GeomError },
    #[error("unknown segment {0}")]
    UnknownSegment(SegmentId),
    #[error("lane graph json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: SegmentId,
    pub centerline: Polyline,
    pub successors: Vec<SegmentId>,
    pub left_neighbor: Option<SegmentId>,
    pub right_neighbor: Option<SegmentId>,
}

/// On-disk form of a segment. `left`/`right` are neighbor ids or null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: SegmentId,
    pub centerline: Vec<Point2>,
    #[serde(default)]
    pub successors: Vec<SegmentId>,
    #[serde(default)]
    pub left: Option<SegmentId>,
    #[serde(default)]
    pub right: Option<SegmentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGraphRecord {
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneGraph {
    segments: BTreeMap<SegmentId, LaneSegment>,
}

impl Serialize for LaneGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LaneGraph {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let rec = LaneGraphRecord::deserialize(de)?;
        LaneGraph::from_record(rec).map_err(serde::de::Error::custom)
    }
}

impl LaneGraph {
    /// Builds a graph, rejecting duplicate ids and dangling edges.
    pub fn new(segments: Vec<LaneSegment>) -> Result<Self, LaneGraphError> {
        let mut map = BTreeMap::new();
        for seg in segments {
            let id = seg.id;
            if map.insert(id, seg).is_some() {
                return Err(LaneGraphError::DuplicateId(id));
            }
        }
        for seg in map.values() {
            let refs = seg
                .successors
                .iter()
                .map(|&s| (s, "successor"))
                .chain(seg.left_neighbor.map(|s| (s, "left")))
                .chain(seg.right_neighbor.map(|s| (s, "right")));
            for (to, kind) in refs {
                if !map.contains_key(&to) {
                    return Err(LaneGraphError::DanglingReference { from: seg.id, to, kind });
                }
            }
        }
        Ok(Self { segments: map })
    }

    pub fn from_record(rec: LaneGraphRecord) -> Result<Self, LaneGraphError> {
        let segments = rec
            .segments
            .into_iter()
            .map(|r| {
                let centerline = Polyline::new(r.centerline)
                    .map_err(|source| LaneGraphError::Centerline { id: r.id, source })?;
                Ok(LaneSegment {
                    id: r.id,
                    centerline,
                    successors: r.successors,
                    left_neighbor: r.left,
                    right_neighbor: r.right,
                })
            })
            .collect::<Result<Vec<_>, LaneGraphError>>()?;
        Self::new(segments)
    }

    pub fn to_record(&self) -> LaneGraphRecord {
        LaneGraphRecord {
            segments: self
                .segments
                .values()
                .map(|s| SegmentRecord {
                    id: s.id,
                    centerline: s.centerline.points().to_vec(),
                    successors: s.successors.clone(),
                    left: s.left_neighbor,
                    right: s.right_neighbor,
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LaneGraphError> {
        Self::from_record(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("lane graph records serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LaneGraphError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn segment(&self, id: SegmentId) -> Option<&LaneSegment> {
        self.segments.get(&id)
    }

    pub fn segments(&self) -> impl Iterator<Item = &LaneSegment> {
        self.segments.values()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn transformed(&self, tf: &crate::geom::RigidTransform) -> LaneGraph {
        LaneGraph {
            segments: self
                .segments
                .iter()
                .map(|(&id, s)| {
                    (
                        id,
                        LaneSegment {
                            centerline: s.centerline.transformed(tf),
                            ..s.clone()
                        },
                    )
                })
                .collect(),
        }
    }

    /// True when `ids` is a chain in which each id is a successor of the previous.
    pub fn is_successor_chain(&self, ids: &[SegmentId]) -> bool {
        ids.windows(2).all(|w| {
            self.segment(w[0])
                .map(|s| s.successors.contains(&w[1]))
                .unwrap_or(false)
        }) && ids.iter().all(|id| self.segments.contains_key(id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLane {
    pub path: Polyline,
    pub source_ids: Vec<SegmentId>,
    pub score: f64,
}

/// Knobs for reference-lane extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Search radius for near segments; agents with nothing inside are off-map.
    pub radius: f64,
    pub heading_weight: f64,
    /// Penalty per meter of offset between the agent and the lane start.
    pub distance_weight: f64,
    /// Lanes sharing more than this fraction of segment ids are duplicates.
    pub max_overlap: f64,
    pub min_length: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            radius: 10.0,
            heading_weight: 1.0,
            distance_weight: 0.1,
            max_overlap: 0.5,
            min_length: 5.0,
        }
    }
}

/// Segments whose centerline passes within `radius` of `position`,
/// nearest first (ties by id).
pub fn nearby_segments(g: &LaneGraph, position: Point2, radius: f64) -> Vec<SegmentId> {
    let mut hits: Vec<(f64, SegmentId)> = g
        .segments()
        .filter_map(|s| {
            let d = s.centerline.distance_to(position);
            (d <= radius).then_some((d, s.id))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, id)| id).collect()
}

/// Concatenated centerlines of a successor chain.
pub fn chain_path(g: &LaneGraph, ids: &[SegmentId]) -> Polyline {
    let mut pts: Vec<Point2> = Vec::new();
    for id in ids {
        let seg = g.segment(*id).expect("chain ids come from the graph");
        let cl = seg.centerline.points();
        let skip = usize::from(pts.last().is_some_and(|&p| p.distance(cl[0]) < 1e-9));
        pts.extend_from_slice(&cl[skip..]);
    }
    Polyline::new(pts).expect("chains of valid centerlines are valid")
}

/// Depth-first enumeration of successor chains from `seed`. A chain stops
/// once its centerline length reaches `horizon`, at a dead end, or just
/// before revisiting a segment. Paths are clipped to `horizon`.
pub fn expand_forward(
    g: &LaneGraph,
    seed: SegmentId,
    horizon: f64,
) -> Result<Vec<ReferenceLane>, LaneGraphError> {
    let seed_seg = g.segment(seed).ok_or(LaneGraphError::UnknownSegment(seed))?;
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<SegmentId>, f64)> = vec![(vec![seed], seed_seg.centerline.arclength())];
    while let Some((chain, length)) = stack.pop() {
        let tail = g.segment(*chain.last().unwrap()).unwrap();
        let next: Vec<SegmentId> = tail
            .successors
            .iter()
            .copied()
            .filter(|s| !chain.contains(s))
            .collect();
        if length >= horizon || next.is_empty() {
            let mut path = chain_path(g, &chain);
            if path.arclength() > horizon {
                path = path
                    .truncate_by_arclength(0.0, horizon)
                    .expect("0 < horizon < length");
            }
            out.push(ReferenceLane {
                path,
                source_ids: chain,
                score: 0.0,
            });
            continue;
        }
        // reversed so the first successor is explored first
        for &s in next.iter().rev() {
            let mut c = chain.clone();
            c.push(s);
            let len = length + g.segment(s).unwrap().centerline.arclength();
            stack.push((c, len));
        }
    }
    Ok(out)
}

/// Heading of a trajectory at its last point, from the displacement over
/// up to `window` steps. Returns `None` for stationary tracks.
pub fn track_heading(past: &[Point2], window: usize) -> Option<f64> {
    let n = past.len();
    if n < 2 {
        return None;
    }
    let last = past[n - 1];
    let steps = window.clamp(1, n - 1);
    let d = last - past[n - 1 - steps];
    if d.norm() > 1e-9 {
        return Some(d.angle());
    }
    past.iter()
        .rev()
        .map(|&p| last - p)
        .find(|d| d.norm() > 1e-9)
        .map(|d| d.angle())
}

/// Mean speed over the last `window` steps of a uniformly sampled track.
pub fn track_speed(past: &[Point2], dt: f64, window: usize) -> f64 {
    let n = past.len();
    if n < 2 {
        return 0.0;
    }
    let steps = window.clamp(1, n - 1);
    past[n - 1].distance(past[n - 1 - steps]) / (steps as f64 * dt)
}

struct Candidate {
    lane: ReferenceLane,
    end_alignment: f64,
}

/// Up to `l_max` reference lanes for an agent, best first.
///
/// Candidates are successor chains expanded from near segments and their
/// lateral neighbors, each clipped to start at the agent's projection and
/// to extend `horizon` meters ahead of it. Scoring is
/// `heading_weight * cos(dheading) - distance_weight * offset` at the lane
/// start; ties fall back to alignment of the whole lane (start to end) and
/// then to segment ids. Greedy overlap removal keeps the better lane.
pub fn extract_reference_lanes(
    g: &LaneGraph,
    past: &[Point2],
    l_max: usize,
    horizon: f64,
    cfg: &ExtractionConfig,
) -> Vec<ReferenceLane> {
    let Some(&position) = past.last() else {
        return Vec::new();
    };
    if l_max == 0 {
        return Vec::new();
    }
    let heading = track_heading(past, 5).unwrap_or(0.0);
    let heading_dir = Point2::from_angle(heading);

    let near = nearby_segments(g, position, cfg.radius);
    if near.is_empty() {
        return Vec::new();
    }
    let mut seeds: Vec<SegmentId> = Vec::new();
    for &id in &near {
        let seg = g.segment(id).unwrap();
        for s in [Some(id), seg.left_neighbor, seg.right_neighbor].into_iter().flatten() {
            if !seeds.contains(&s) {
                seeds.push(s);
            }
        }
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for seed in seeds {
        let seed_seg = g.segment(seed).unwrap();
        let s_on_seed = seed_seg.centerline.project(position).s;
        let chains = expand_forward(g, seed, s_on_seed + horizon).expect("seed is in graph");
        for chain in chains {
            let full = chain_path(g, &chain.source_ids);
            let proj = full.project(position);
            let end = (proj.s + horizon).min(full.arclength());
            if end - proj.s < cfg.min_length {
                continue;
            }
            let path = full
                .truncate_by_arclength(proj.s, end)
                .expect("range checked against min_length");
            let source_ids = covered_segments(g, &chain.source_ids, proj.s, end);
            let cos_start = path.direction_at(0.0).dot(heading_dir);
            let offset = position.distance(path.first());
            let score = cfg.heading_weight * cos_start - cfg.distance_weight * offset;
            let chord = path.last() - path.first();
            let end_alignment = chord.dot(heading_dir) / chord.norm().max(1e-12);
            candidates.push(Candidate {
                lane: ReferenceLane {
                    path,
                    source_ids,
                    score,
                },
                end_alignment,
            });
        }
    }

    candidates.sort_by(|a, b| {
        b.lane
            .score
            .total_cmp(&a.lane.score)
            .then(b.end_alignment.total_cmp(&a.end_alignment))
            .then(a.lane.source_ids.cmp(&b.lane.source_ids))
    });

    let mut kept: Vec<ReferenceLane> = Vec::new();
    for c in candidates {
        if kept.len() == l_max {
            break;
        }
        if kept
            .iter()
            .all(|k| overlap_fraction(&k.source_ids, &c.lane.source_ids) <= cfg.max_overlap)
        {
            kept.push(c.lane);
        }
    }
    kept
}

/// Ids of the chain segments whose arc-length span intersects `(s0, s1)`.
fn covered_segments(g: &LaneGraph, chain: &[SegmentId], s0: f64, s1: f64) -> Vec<SegmentId> {
    let mut start = 0.0;
    let mut out = Vec::new();
    for &id in chain {
        let len = g.segment(id).unwrap().centerline.arclength();
        let end = start + len;
        if end > s0 + 1e-9 && start < s1 - 1e-9 {
            out.push(id);
        }
        start = end;
    }
    out
}

/// Shared ids divided by the size of the smaller set.
pub fn overlap_fraction(a: &[SegmentId], b: &[SegmentId]) -> f64 {
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    let denom = sa.len().min(sb.len());
    if denom == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / denom as f64
}

/// Travel-distance rule for resampling reference lanes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleRule {
    pub dt: f64,
    pub min_distance: f64,
}

impl Default for ResampleRule {
    fn default() -> Self {
        Self {
            dt: 0.1,
            min_distance: 5.0,
        }
    }
}

/// `t_f` lane points for index-wise comparison with a predicted future.
///
/// The travel distance is `D = max(speed * t_f * dt, min_distance)`,
/// clipped to the lane length; point `i` (1-based) sits at arc length
/// `D * i / t_f` from the lane start, so the last point is at `D`.
pub fn resample_reference(lane: &ReferenceLane, t_f: usize, speed: f64, rule: &ResampleRule) -> Vec<Point2> {
    let length = lane.path.arclength();
    let travel = (speed * t_f as f64 * rule.dt).max(rule.min_distance).min(length);
    let clipped = if travel < length {
        lane.path.truncate_by_arclength(0.0, travel).expect("0 < travel < length")
    } else {
        lane.path.clone()
    };
    let mut pts = clipped.sample_uniform(t_f + 1).expect("t_f >= 1");
    pts.remove(0);
    pts
}
