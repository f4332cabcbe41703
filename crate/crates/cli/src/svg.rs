//! Static SVG plots: heat maps with contours, and sublevel/cone fans.

use std::fmt::Write;

use hamcalc::cone::{cone_eval, SublevelPolygon};
use hamcalc::{GridField, Rect, Vec2};

const SIZE: f64 = 480.0;
const MAX_CELLS: usize = 80;

/// Maps a plot rectangle onto a square panel with `y` pointing up.
struct Frame {
    rect: Rect,
    left: f64,
}

impl Frame {
    fn map(&self, p: Vec2) -> (f64, f64) {
        let s = SIZE / self.rect.width().max(self.rect.height());
        (
            self.left + (p.x - self.rect.min.x) * s,
            SIZE - (p.y - self.rect.min.y) * s,
        )
    }

    fn path(&self, pts: &[Vec2], closed: bool) -> String {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { 'M' } else { 'L' });
        }
        if closed {
            d.push('Z');
        }
        d
    }
}

fn color(t: f64) -> String {
    // Blue through white to red.
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (40.0 + 215.0 * s, 80.0 + 175.0 * s, 255.0)
    } else {
        let s = (t - 0.5) / 0.5;
        (255.0, 255.0 - 175.0 * s, 255.0 - 215.0 * s)
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

fn header(width: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{SIZE}\" viewBox=\"0 0 {width} {SIZE}\">\n"
    )
}

/// Heat map of `u` with `contours` equispaced level lines and optional
/// polylines drawn on top.
pub fn heatmap(u: &GridField, contours: usize, overlays: &[Vec<Vec2>]) -> String {
    let rect = u.bounds();
    let frame = Frame { rect, left: 0.0 };
    let cells = MAX_CELLS.min(u.nx() - 1).max(1);
    let step = rect.width().max(rect.height()) / cells as f64;
    let (cx, cy) = ((rect.width() / step).round() as usize, (rect.height() / step).round() as usize);
    let node = |i: usize, j: usize| rect.min + Vec2::new(i as f64 * step, j as f64 * step);
    let vals: Vec<Vec<f64>> = (0..=cy).map(|j| (0..=cx).map(|i| u.interp_clamped(rect.clamp(node(i, j)))).collect()).collect();
    let (lo, hi) = (u.min_value(), u.max_value());
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = header(SIZE);
    let px = SIZE / cells as f64;
    for j in 0..cy {
        for i in 0..cx {
            let mean = 0.25 * (vals[j][i] + vals[j][i + 1] + vals[j + 1][i] + vals[j + 1][i + 1]);
            let (x, y) = frame.map(node(i, j + 1));
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                px + 0.05,
                px + 0.05,
                color((mean - lo) / span)
            );
        }
    }
    for c in 1..=contours {
        let level = lo + span * c as f64 / (contours + 1) as f64;
        let mut d = String::new();
        for j in 0..cy {
            for i in 0..cx {
                for (a, b) in cell_segments(&vals, i, j, level) {
                    let p = node(i, j) + Vec2::new(a.0, a.1) * step;
                    let q = node(i, j) + Vec2::new(b.0, b.1) * step;
                    d.push_str(&frame.path(&[p, q], false));
                }
            }
        }
        if !d.is_empty() {
            let _ = writeln!(s, "<path d=\"{d}\" stroke=\"black\" stroke-width=\"0.6\" fill=\"none\"/>");
        }
    }
    for line in overlays {
        let _ = writeln!(
            s,
            "<path d=\"{}\" stroke=\"black\" stroke-width=\"2\" fill=\"none\"/>",
            frame.path(line, false)
        );
        for p in line {
            let (x, y) = frame.map(*p);
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"black\"/>");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Marching-squares segments of one cell in cell-local coordinates.
fn cell_segments(v: &[Vec<f64>], i: usize, j: usize, level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let c = [v[j][i], v[j][i + 1], v[j + 1][i + 1], v[j + 1][i]];
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let crossings: Vec<(f64, f64)> = (0..4)
        .filter_map(|e| {
            let (a, b) = (c[e] - level, c[(e + 1) % 4] - level);
            if (a < 0.0) == (b < 0.0) {
                return None;
            }
            let t = a / (a - b);
            let (p, q) = (corners[e], corners[(e + 1) % 4]);
            Some((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)))
        })
        .collect();
    crossings.chunks_exact(2).map(|w| (w[0], w[1])).collect()
}

/// Two panels: the sublevel polygon `{H <= k}` with a fan of rays to its
/// vertices, and level sets `{C_k = c}` of the cone function.
pub fn cone_fan(poly: &SublevelPolygon, cone_levels: &[f64]) -> String {
    let reach = poly.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-12) * 1.15;
    let left = Frame {
        rect: Rect::centered(reach),
        left: 0.0,
    };
    let mut s = header(2.0 * SIZE + 20.0);
    let _ = writeln!(
        s,
        "<path d=\"{}\" fill=\"rgb(220,230,250)\" stroke=\"black\" stroke-width=\"1.5\"/>",
        left.path(&poly.vertices, true)
    );
    let stride = (poly.vertices.len() / 24).max(1);
    for v in poly.vertices.iter().step_by(stride) {
        let _ = writeln!(
            s,
            "<path d=\"{}\" stroke=\"gray\" stroke-width=\"0.6\"/>",
            left.path(&[Vec2::ZERO, *v], false)
        );
    }

    let rings: Vec<Vec<Vec2>> = cone_levels
        .iter()
        .map(|&c| {
            (0..360)
                .filter_map(|a| {
                    let d = Vec2::polar((a as f64).to_radians());
                    let g = cone_eval(poly, d);
                    (g > 0.0).then(|| d * (c / g))
                })
                .collect()
        })
        .collect();
    let extent = rings.iter().flatten().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max).max(1e-12) * 1.1;
    let right = Frame {
        rect: Rect::centered(extent),
        left: SIZE + 20.0,
    };
    for ring in &rings {
        let _ = writeln!(
            s,
            "<path d=\"{}\" fill=\"none\" stroke=\"rgb(200,40,40)\" stroke-width=\"1.2\"/>",
            right.path(ring, true)
        );
    }
    s.push_str("</svg>\n");
    s
}
