use std::fmt::Write as _;

use crate::geom::Point2;
use crate::metrics::Forecast;
use crate::scenario::Scene;

const MARGIN: f64 = 15.0;

struct View {
    min: Point2,
    max: Point2,
    scale: f64,
}

impl View {
    fn px(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, (self.max.y - p.y) * self.scale)
    }

    fn path(&self, pts: &[Point2]) -> String {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.px(*p);
            let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        }
        d
    }
}

/// SVG of one scene: lanes gray, observed pasts yellow, the target agent's
/// predicted modes green (opacity by rank) and its ground truth red. The
/// view is centered on the target agent. Output depends only on the inputs.
pub fn render_svg(scene: &Scene, forecast: Option<&Forecast>, scale: f64) -> String {
    let target = scene.target_track();
    let mut focus: Vec<Point2> = target.past.iter().chain(&target.future).copied().collect();
    if let Some(f) = forecast {
        focus.extend(f.trajectories.iter().flatten().copied());
    }
    let (mut min, mut max) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in focus.iter().filter(|p| p.is_finite()) {
        min = Point2::new(min.x.min(p.x), min.y.min(p.y));
        max = Point2::new(max.x.max(p.x), max.y.max(p.y));
    }
    if !min.x.is_finite() {
        (min, max) = (Point2::ZERO, Point2::ZERO);
    }
    let view = View {
        min: Point2::new(min.x - MARGIN, min.y - MARGIN),
        max: Point2::new(max.x + MARGIN, max.y + MARGIN),
        scale,
    };
    let (w, h) = ((view.max.x - view.min.x) * scale, (view.max.y - view.min.y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g fill="none" stroke-linecap="round" stroke-linejoin="round">"#);
    for seg in scene.map.segments() {
        let _ = writeln!(
            s,
            r##"<path d="{}" stroke="#9e9e9e" stroke-width="{:.2}"/>"##,
            view.path(seg.centerline.points()),
            0.3 * scale
        );
    }
    for (i, a) in scene.agents.iter().enumerate() {
        let width = if i == scene.target { 0.5 } else { 0.3 };
        let _ = writeln!(
            s,
            r##"<path d="{}" stroke="#f2c200" stroke-width="{:.2}"/>"##,
            view.path(&a.past),
            width * scale
        );
    }
    if let Some(f) = forecast {
        let order = f.top_k(f.modes()).unwrap_or_default();
        for (rank, &m) in order.iter().enumerate().rev() {
            let opacity = 1.0 - 0.6 * rank as f64 / f.modes().max(1) as f64;
            let _ = writeln!(
                s,
                r##"<path d="{}" stroke="#2e9e3e" stroke-width="{:.2}" stroke-opacity="{opacity:.2}"/>"##,
                view.path(&f.trajectories[m]),
                0.35 * scale
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<path d="{}" stroke="#d62728" stroke-width="{:.2}"/>"##,
        view.path(&target.future),
        0.4 * scale
    );
    s.push_str("</g>\n</svg>\n");
    s
}
