//! Planar polyline geometry: arc length, resampling, clipping and
//! Frenet-frame projection.
//!
//! Polylines are validated at construction and immutable afterwards.
//! Zero-length segments are dropped, so every stored segment has a
//! strictly positive length and a well-defined direction.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("polyline needs at least 2 distinct points, got {distinct}")]
    TooFewPoints { distinct: usize },
    #[error("invalid arc-length range [{s0}, {s1}] for polyline of length {length}")]
    InvalidRange { s0: f64, s1: f64, length: f64 },
    #[error("resample count must be at least 2, got {0}")]
    InvalidCount(usize),
}

/// A point (or vector) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = theta.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Rotation followed by translation: `p -> R(theta) p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    cos: f64,
    sin: f64,
    translation: Point2,
}

impl RigidTransform {
    pub fn new(theta: f64, translation: Point2) -> Self {
        Self {
            cos: theta.cos(),
            sin: theta.sin(),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, Point2::ZERO)
    }

    /// Frame whose origin is `origin` and whose +x axis points along `heading`.
    /// Applying it maps world coordinates into that frame.
    pub fn into_frame(origin: Point2, heading: f64) -> Self {
        let rot = Self::new(-heading, Point2::ZERO);
        let t = rot.apply_vector(-origin);
        Self::new(-heading, t)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        self.apply_vector(p) + self.translation
    }

    pub fn apply_vector(&self, v: Point2) -> Point2 {
        Point2::new(self.cos * v.x - self.sin * v.y, self.sin * v.x + self.cos * v.y)
    }

    pub fn apply_all(&self, pts: &[Point2]) -> Vec<Point2> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn rotation(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn inverse(&self) -> Self {
        let inv = Self {
            cos: self.cos,
            sin: -self.sin,
            translation: Point2::ZERO,
        };
        let t = inv.apply_vector(-self.translation);
        Self { translation: t, ..inv }
    }
}

/// Arc-length coordinates relative to a polyline.
///
/// `n` is positive to the left of the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetCoord {
    pub s: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub frenet: FrenetCoord,
    pub closest: Point2,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    points: Vec<Point2>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<Point2>,
        }
        let raw = Raw::deserialize(de)?;
        Polyline::new(raw.points).map_err(serde::de::Error::custom)
    }
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeomError> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite { index });
        }
        let mut kept: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            match kept.last() {
                Some(&last) if (p - last).norm() == 0.0 => {}
                _ => kept.push(p),
            }
        }
        if kept.len() < 2 {
            return Err(GeomError::TooFewPoints { distinct: kept.len() });
        }
        let mut cumulative = Vec::with_capacity(kept.len());
        cumulative.push(0.0);
        for w in kept.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Ok(Self {
            points: kept,
            cumulative,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn num_segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        *self.points.last().unwrap()
    }

    pub fn arclength(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Index of the segment containing arc length `s`; vertices belong to
    /// the outgoing segment except at the very end.
    fn segment_at(&self, s: f64) -> usize {
        let n = self.num_segments();
        let idx = self.cumulative.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Point at arc length `s`, clamped to the polyline.
    pub fn point_at(&self, s: f64) -> Point2 {
        if s <= 0.0 {
            return self.first();
        }
        if s >= self.arclength() {
            return self.last();
        }
        let i = self.segment_at(s);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / len;
        self.points[i].lerp(self.points[i + 1], t)
    }

    /// Unit tangent of the segment at arc length `s`.
    pub fn direction_at(&self, s: f64) -> Point2 {
        let i = self.segment_at(s.clamp(0.0, self.arclength()));
        let d = self.points[i + 1] - self.points[i];
        d * (1.0 / d.norm())
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.direction_at(s).angle()
    }

    /// Closest point on the polyline to `q`, with its arc length and signed
    /// normal offset. Equidistant candidates resolve to the smaller `s`.
    pub fn project_detailed(&self, q: Point2) -> Projection {
        let mut best: Option<(f64, f64, f64, Point2, usize)> = None;
        for i in 0..self.num_segments() {
            let a = self.points[i];
            let ab = self.points[i + 1] - a;
            let seg_len = self.cumulative[i + 1] - self.cumulative[i];
            let t = ((q - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            let c = a + ab * t;
            let d2 = (q - c).norm_sq();
            let s = self.cumulative[i] + t * seg_len;
            let cross = ab.cross(q - a);
            let better = match best {
                None => true,
                Some((bd2, bs, ..)) => d2 < bd2 || (d2 == bd2 && s < bs),
            };
            if better {
                best = Some((d2, s, cross, c, i));
            }
        }
        let (d2, s, cross, closest, segment) = best.expect("polyline has at least one segment");
        let dist = d2.sqrt();
        let n = if cross < 0.0 { -dist } else { dist };
        Projection {
            frenet: FrenetCoord { s, n },
            closest,
            segment,
        }
    }

    pub fn project(&self, q: Point2) -> FrenetCoord {
        self.project_detailed(q).frenet
    }

    pub fn distance_to(&self, q: Point2) -> f64 {
        self.project(q).n.abs()
    }

    /// `count` points equally spaced in arc length; endpoints preserved.
    pub fn resample(&self, count: usize) -> Result<Polyline, GeomError> {
        Ok(Polyline::new(self.sample_uniform(count)?)
            .expect("resampling a valid polyline keeps distinct endpoints"))
    }

    /// Like [`Polyline::resample`] but returns the raw points.
    pub fn sample_uniform(&self, count: usize) -> Result<Vec<Point2>, GeomError> {
        if count < 2 {
            return Err(GeomError::InvalidCount(count));
        }
        let total = self.arclength();
        let last = count - 1;
        Ok((0..count)
            .map(|j| match j {
                0 => self.first(),
                j if j == last => self.last(),
                j => self.point_at(total * j as f64 / last as f64),
            })
            .collect())
    }

    /// Sub-polyline covering arc lengths `[s0, s1]`.
    pub fn truncate_by_arclength(&self, s0: f64, s1: f64) -> Result<Polyline, GeomError> {
        let length = self.arclength();
        let tol = 1e-9 * length.max(1.0);
        if !(s0 < s1) || s0 < -tol || s1 > length + tol {
            return Err(GeomError::InvalidRange { s0, s1, length });
        }
        let s0 = s0.max(0.0);
        let s1 = s1.min(length);
        let mut pts = vec![self.point_at(s0)];
        for (p, &c) in self.points.iter().zip(&self.cumulative) {
            if c > s0 && c < s1 {
                pts.push(*p);
            }
        }
        pts.push(self.point_at(s1));
        Polyline::new(pts).map_err(|_| GeomError::InvalidRange { s0, s1, length })
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Polyline {
        Polyline::new(tf.apply_all(&self.points)).expect("rigid transforms preserve distinct points")
    }
}

pub fn arclength(p: &Polyline) -> f64 {
    p.arclength()
}

pub fn project(p: &Polyline, q: Point2) -> FrenetCoord {
    p.project(q)
}

pub fn resample(p: &Polyline, count: usize) -> Result<Polyline, GeomError> {
    p.resample(count)
}

pub fn truncate_by_arclength(p: &Polyline, s0: f64, s1: f64) -> Result<Polyline, GeomError> {
    p.truncate_by_arclength(s0, s1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pl(pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    /// Dense sampling oracle: returns (min distance, s at min).
    fn dense_closest(p: &Polyline, q: Point2, samples: usize) -> (f64, f64) {
        let total = p.arclength();
        (0..=samples)
            .map(|i| {
                let s = total * i as f64 / samples as f64;
                (p.point_at(s).distance(q), s)
            })
            .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc })
    }

    #[test]
    fn arclength_basic() {
        assert_eq!(pl(&[(0.0, 0.0), (10.0, 0.0)]).arclength(), 10.0);
        assert_eq!(pl(&[(0.0, 0.0), (3.0, 4.0)]).arclength(), 5.0);
    }

    #[test]
    fn quarter_circle_arclength() {
        let pts: Vec<Point2> = (0..100)
            .map(|i| {
                let th = std::f64::consts::FRAC_PI_2 * i as f64 / 99.0;
                Point2::new(10.0 * th.cos(), 10.0 * th.sin())
            })
            .collect();
        let chord_sum: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
        let p = Polyline::new(pts).unwrap();
        assert_abs_diff_eq!(p.arclength(), chord_sum, epsilon = 1e-12);
        // chord error per segment ~ R*theta^3/24
        let analytic = std::f64::consts::PI * 10.0 / 2.0;
        assert!((p.arclength() - analytic).abs() < 1e-3);
        assert!(p.arclength() < analytic);
    }

    #[test]
    fn project_straight_both_sides() {
        let p = pl(&[(0.0, 0.0), (10.0, 0.0)]);
        let f = p.project(Point2::new(5.0, 2.0));
        assert_abs_diff_eq!(f.s, 5.0);
        assert_abs_diff_eq!(f.n, 2.0);
        let f = p.project(Point2::new(5.0, -2.0));
        assert_abs_diff_eq!(f.s, 5.0);
        assert_abs_diff_eq!(f.n, -2.0);
    }

    #[test]
    fn project_corner_matches_dense_oracle() {
        let p = pl(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]);
        let q = Point2::new(12.0, 5.0);
        let (d, s) = dense_closest(&p, q, 100_000);
        let f = p.project(q);
        assert!((f.n.abs() - d).abs() <= 1e-6 * d);
        assert!((f.s - s).abs() < 1e-3);
        // right of travel along the upward leg
        assert!(f.n < 0.0);
        assert_abs_diff_eq!(f.s, 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.n, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn tie_prefers_smaller_s() {
        // q equidistant from both legs of a U
        let p = pl(&[(0.0, 0.0), (0.0, 10.0), (4.0, 10.0), (4.0, 0.0)]);
        let f = p.project(Point2::new(2.0, 5.0));
        assert_abs_diff_eq!(f.s, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn resample_uniform_and_endpoints() {
        let p = pl(&[(0.0, 0.0), (10.0, 0.0)]);
        let r = p.resample(5).unwrap();
        let xs: Vec<f64> = r.points().iter().map(|q| q.x).collect();
        assert_eq!(xs, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        let l = pl(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let r2 = l.resample(2).unwrap();
        assert_eq!(r2.points(), &[Point2::new(0.0, 0.0), Point2::new(4.0, 4.0)]);
        assert!(matches!(l.resample(1), Err(GeomError::InvalidCount(1))));
    }

    #[test]
    fn resample_l_shape_walks_cumulative_table() {
        let l = pl(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let r = l.sample_uniform(5).unwrap();
        // oracle: walk the cumulative table by hand, spacing 2.0
        let expected = [(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (4.0, 2.0), (4.0, 4.0)];
        for (got, want) in r.iter().zip(expected) {
            assert_abs_diff_eq!(got.x, want.0, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, want.1, epsilon = 1e-12);
        }
        for w in r.windows(2) {
            let gap = l.project(w[1]).s - l.project(w[0]).s;
            assert_abs_diff_eq!(gap, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn truncate_cases() {
        let p = pl(&[(0.0, 0.0), (10.0, 0.0)]);
        let t = p.truncate_by_arclength(2.0, 8.0).unwrap();
        assert_eq!(t.points(), &[Point2::new(2.0, 0.0), Point2::new(8.0, 0.0)]);
        assert_eq!(p.truncate_by_arclength(0.0, 10.0).unwrap(), p);
        assert!(p.truncate_by_arclength(5.0, 5.0).is_err());
        assert!(p.truncate_by_arclength(6.0, 5.0).is_err());

        let l = pl(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let t = l.truncate_by_arclength(3.0, 6.0).unwrap();
        assert_abs_diff_eq!(t.arclength(), 3.0, epsilon = 1e-12);
        // every point of the clip lies on the original within [3, 6]
        for i in 0..=300 {
            let q = t.point_at(3.0 * i as f64 / 300.0);
            let f = l.project(q);
            assert!(f.n.abs() < 1e-12);
            assert!(f.s >= 3.0 - 1e-12 && f.s <= 6.0 + 1e-12);
        }
        assert_eq!(t.points()[1], Point2::new(4.0, 0.0));
    }

    #[test]
    fn construction_rejects_degenerate() {
        let dup = vec![Point2::new(1.0, 1.0); 4];
        assert!(matches!(Polyline::new(dup), Err(GeomError::TooFewPoints { distinct: 1 })));
        let nan = vec![Point2::new(0.0, 0.0), Point2::new(f64::NAN, 1.0)];
        assert!(matches!(Polyline::new(nan), Err(GeomError::NonFinite { index: 1 })));
        let p = pl(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(p.points().len(), 3);
    }

    #[test]
    fn rigid_transform_inverse_and_frame() {
        let tf = RigidTransform::new(0.7, Point2::new(3.0, -2.0));
        let p = Point2::new(1.5, 4.0);
        let back = tf.inverse().apply(tf.apply(p));
        assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-12);
        let frame = RigidTransform::into_frame(Point2::new(5.0, 5.0), std::f64::consts::FRAC_PI_2);
        let q = frame.apply(Point2::new(5.0, 7.0));
        assert_abs_diff_eq!(q.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
    }
}
