//! Minimal SVG scatter plot of polytope corners in logit space.

use std::fmt::Write as _;

use crate::polytope::PolytopeEstimate;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

/// Renders corners (red crosses) and the center (blue dot) on the first two
/// logit axes. Returns `None` unless the logits have 2 or 3 components.
pub fn corners_svg(est: &PolytopeEstimate, title: &str) -> Option<String> {
    let c = est.center.len();
    if !(c == 2 || c == 3) {
        return None;
    }
    let points: Vec<(f64, f64)> = est.corners.iter().map(|p| (p[0], p[1])).collect();
    let all = points.iter().copied().chain(std::iter::once((est.center[0], est.center[1])));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // Square, padded extent so a collapsed polytope still renders.
    let span = (x1 - x0).max(y1 - y0).max(1e-9) * 1.2;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (x0, y0) = (cx - span / 2.0, cy - span / 2.0);
    let inner = WIDTH - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / span * inner;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / span * inner;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#888"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">logit 0</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">logit 1</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    if c == 3 {
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end" fill="#555">projected onto logits 0 and 1</text>"##,
            WIDTH - MARGIN,
            MARGIN - 6.0
        );
    }
    for &(x, y) in &points {
        let (px, py) = (sx(x), sy(y));
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="red" stroke-width="2"/>"#,
            px - 5.0,
            py - 5.0,
            px + 5.0,
            py + 5.0,
            px - 5.0,
            py + 5.0,
            px + 5.0,
            py - 5.0
        );
    }
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="blue"/>"#,
        sx(est.center[0]),
        sy(est.center[1])
    );
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
