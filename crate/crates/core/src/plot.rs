//! Overhead SVG plots of episode logs.
//!
//! Drawing coordinates are world metres with the y axis flipped by a group transform,
//! so every emitted point can be read back as a world position.

use std::fmt::Write as _;

use crate::env::EpisodeLog;
use crate::geom::Vec2;
use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    /// Output width in pixels; the height follows the aspect ratio.
    pub width_px: f64,
    /// Margin around the data (m).
    pub margin: f64,
    pub target_color: &'static str,
    pub rover_color: &'static str,
    pub obstacle_color: &'static str,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width_px: 640.0,
            margin: 0.25,
            target_color: "#d62728",
            rover_color: "#1f77b4",
            obstacle_color: "#7f7f7f",
        }
    }
}

fn polyline(out: &mut String, pts: &[Vec2], color: &str, dash: bool, id: &str) {
    let _ = write!(
        out,
        r#"<polyline id="{id}" fill="none" stroke="{color}" stroke-width="0.02"{} points=""#,
        if dash { r#" stroke-dasharray="0.06 0.04""# } else { "" }
    );
    for (k, p) in pts.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.4},{:.4}", p.x, p.y);
    }
    out.push_str("\"/>\n");
}

/// Renders the target path (dashed), the rover path and, when `terrain` is given,
/// crater rims and boulder outlines near the paths.
pub fn render_svg(log: &EpisodeLog, terrain: Option<&Terrain>, title: &str, style: &PlotStyle) -> String {
    let target: Vec<Vec2> = log.records.iter().map(|r| r.target.position).collect();
    let rover: Vec<Vec2> = log.records.iter().map(|r| r.rover.position).collect();
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in target.iter().chain(&rover) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.is_finite() {
        lo = Vec2::new(-1.0, -1.0);
        hi = Vec2::new(1.0, 1.0);
    }
    lo = lo - Vec2::new(style.margin, style.margin);
    hi = hi + Vec2::new(style.margin, style.margin);
    let size = hi - lo;
    let height_px = style.width_px * size.y / size.x;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{:.4} {:.4} {:.4} {:.4}">"#,
        style.width_px,
        height_px,
        lo.x,
        -hi.y,
        size.x,
        size.y
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{:.4}" y="{:.4}" width="{:.4}" height="{:.4}" fill="#f4f1ea"/>"##,
        lo.x, -hi.y, size.x, size.y
    );
    s.push_str("<g transform=\"scale(1,-1)\">\n");
    if let Some(t) = terrain {
        let near = |c: Vec2, r: f64| c.x + r > lo.x && c.x - r < hi.x && c.y + r > lo.y && c.y - r < hi.y;
        for c in t.craters.craters.iter().filter(|c| near(c.center, c.radius)) {
            let _ = writeln!(
                s,
                r#"<circle class="crater" cx="{:.4}" cy="{:.4}" r="{:.4}" fill="none" stroke="{}" stroke-width="0.01"/>"#,
                c.center.x, c.center.y, c.radius, style.obstacle_color
            );
        }
        for b in t.boulders.boulders.iter().filter(|b| near(b.center, b.radius)) {
            let _ = writeln!(
                s,
                r#"<circle class="boulder" cx="{:.4}" cy="{:.4}" r="{:.4}" fill="{}" fill-opacity="0.5"/>"#,
                b.center.x, b.center.y, b.radius, style.obstacle_color
            );
        }
    }
    polyline(&mut s, &target, style.target_color, true, "target");
    polyline(&mut s, &rover, style.rover_color, false, "rover");
    s.push_str("</g>\n</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bounding box `(min, max)` of the points of the polyline with the given id.
pub fn polyline_bbox(svg: &str, id: &str) -> Option<(Vec2, Vec2)> {
    let start = svg.find(&format!(r#"id="{id}""#))?;
    let rest = &svg[start..];
    let p0 = rest.find("points=\"")? + 8;
    let p1 = p0 + rest[p0..].find('"')?;
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for pair in rest[p0..p1].split_whitespace() {
        let (x, y) = pair.split_once(',')?;
        let (x, y): (f64, f64) = (x.parse().ok()?, y.parse().ok()?);
        lo = Vec2::new(lo.x.min(x), lo.y.min(y));
        hi = Vec2::new(hi.x.max(x), hi.y.max(y));
    }
    lo.is_finite().then_some((lo, hi))
}
