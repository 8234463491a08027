//! Minimal self-contained SVG scatter plots of 2D particle clouds.

use std::fmt::Write as _;
use std::path::Path;

use swflow::PointCloud;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// Axis-aligned plotting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds {
    /// Tight box around the cloud with 5% padding.
    pub fn around(cloud: &PointCloud) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in cloud.rows() {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let pad = |lo: f64, hi: f64| {
            let w = (hi - lo).max(1e-9) * 0.05;
            (lo - w, hi + w)
        };
        Bounds { x: pad(x0, x1), y: pad(y0, y1) }
    }
}

/// Renders the first two coordinates of `cloud` as an SVG document.
pub fn scatter_svg(cloud: &PointCloud, bounds: Bounds, title: &str) -> String {
    let sx = (WIDTH - 2.0 * MARGIN) / (bounds.x.1 - bounds.x.0);
    let sy = (HEIGHT - 2.0 * MARGIN) / (bounds.y.1 - bounds.y.0);
    let mut svg = String::with_capacity(64 * cloud.len() + 512);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        MARGIN * 0.6,
        escape(title)
    );
    for (label, x, y, anchor) in [
        (format!("{:.2}", bounds.x.0), MARGIN, HEIGHT - MARGIN * 0.4, "start"),
        (format!("{:.2}", bounds.x.1), WIDTH - MARGIN, HEIGHT - MARGIN * 0.4, "end"),
        (format!("{:.2}", bounds.y.0), MARGIN * 0.1, HEIGHT - MARGIN, "start"),
        (format!("{:.2}", bounds.y.1), MARGIN * 0.1, MARGIN + 10.0, "start"),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{label}</text>"#
        );
    }
    let _ = writeln!(svg, r#"<g fill="steelblue" fill-opacity="0.5">"#);
    for p in cloud.rows() {
        let cx = MARGIN + (p[0] - bounds.x.0) * sx;
        let cy = HEIGHT - MARGIN - (p[1] - bounds.y.0) * sy;
        if (MARGIN..=WIDTH - MARGIN).contains(&cx) && (MARGIN..=HEIGHT - MARGIN).contains(&cy) {
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.2"/>"#);
        }
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_scatter(path: &Path, cloud: &PointCloud, bounds: Bounds, title: &str) -> std::io::Result<()> {
    std::fs::write(path, scatter_svg(cloud, bounds, title))
}
