//! Sublevel polygons and cone functions `C_k(x) = sup {p.x : H(p) <= k}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{subdifferential_set, SubdiffShape};
use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;
use crate::hamiltonian::Hamiltonian;
use crate::optim::golden_min;

/// Default vertex count of a sublevel polygon.
pub const DEFAULT_VERTICES: usize = 512;

/// A convex polygon inscribed in `{H <= k}`; vertices run counterclockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelPolygon {
    pub k: f64,
    pub vertices: Vec<Vec2>,
    /// Bound on the Hausdorff distance to the true sublevel set.
    pub tol: f64,
    #[serde(skip)]
    normal_angles: Vec<f64>,
}

impl SublevelPolygon {
    /// Builds a polygon from counterclockwise vertices in convex position.
    pub fn from_vertices(k: f64, vertices: Vec<Vec2>, tol: f64) -> Result<Self> {
        if vertices.is_empty() {
            return Err(invalid("vertices", "polygon needs at least one vertex"));
        }
        let normal_angles = edge_normal_angles(&vertices);
        Ok(SublevelPolygon {
            k,
            vertices,
            tol,
            normal_angles,
        })
    }

    /// Support function at `x`, with the index of a maximizing vertex (the
    /// lowest index among ties).
    pub fn support_argmax(&self, x: Vec2) -> (usize, f64) {
        let v = &self.vertices;
        let m = v.len();
        if m == 1 || x == Vec2::ZERO {
            return (0, v[0].dot(x));
        }
        let a0 = self.normal_angles[0];
        let mut th = x.angle();
        while th < a0 {
            th += std::f64::consts::TAU;
        }
        while th >= a0 + std::f64::consts::TAU {
            th -= std::f64::consts::TAU;
        }
        // Vertex i sits between edges i-1 and i, i.e. between normal angles
        // a_{i-1} and a_i; its index is the first i with a_i >= th.
        let i = self.normal_angles.partition_point(|&a| a < th) % m;
        let mut best = (i, v[i].dot(x));
        for j in [(i + m - 1) % m, (i + 1) % m, (i + m - 2) % m, (i + 2) % m] {
            let val = v[j].dot(x);
            if val > best.1 || (val == best.1 && j < best.0) {
                best = (j, val);
            }
        }
        best
    }

    pub fn support(&self, x: Vec2) -> f64 {
        self.support_argmax(x).1
    }

    /// Linear-scan support function, used to cross-check the bisection.
    pub fn support_scan(&self, x: Vec2) -> f64 {
        self.vertices.iter().map(|v| v.dot(x)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Unwrapped outward normal angles of the edges `v_i -> v_{i+1}`, nondecreasing.
fn edge_normal_angles(v: &[Vec2]) -> Vec<f64> {
    let m = v.len();
    if m < 2 {
        return vec![0.0; m];
    }
    let mut out: Vec<f64> = Vec::with_capacity(m);
    for i in 0..m {
        let e = v[(i + 1) % m] - v[i];
        let raw = if e.norm() > 0.0 {
            Vec2::new(e.y, -e.x).angle()
        } else {
            out.last().copied().unwrap_or(0.0)
        };
        let mut a = raw;
        if let Some(&prev) = out.last() {
            while a < prev {
                a += std::f64::consts::TAU;
            }
            while a - prev >= std::f64::consts::TAU {
                a -= std::f64::consts::TAU;
            }
        }
        out.push(a);
    }
    out
}

/// Cone function value `C_k(x)` of a polygon.
pub fn cone_eval(poly: &SublevelPolygon, x: Vec2) -> f64 {
    poly.support(x)
}

/// Polygon inscribed in `{H <= k}` from radial bisection along `vertices`
/// equispaced directions about the minimizer.
pub fn sublevel_polygon(h: &Hamiltonian, k: f64, vertices: usize) -> Result<SublevelPolygon> {
    let p0 = h.minimizer();
    let min = h.min_value();
    if k < min - 1e-12 * (1.0 + min.abs()) {
        return Err(Error::EmptySublevel { k, min });
    }
    if vertices < 3 {
        return Err(invalid("vertices", "need at least 3"));
    }
    if k <= min {
        return SublevelPolygon::from_vertices(k, vec![p0], 0.0);
    }
    let radial: Vec<(Vec2, f64)> = (0..vertices)
        .into_par_iter()
        .map(|j| {
            let d = Vec2::polar(std::f64::consts::TAU * j as f64 / vertices as f64);
            let r = h.radial_level(d, k);
            (p0 + d * r, r)
        })
        .collect();
    let pts: Vec<Vec2> = radial.iter().map(|(p, _)| *p).collect();
    let radial_tol = radial.iter().fold(0.0f64, |m, (_, r)| m.max(r.abs())) * 4.0 * f64::EPSILON;
    let diam = pts.iter().fold(0.0f64, |m, p| m.max((*p - p0).norm())) * 2.0;
    let tol = radial_tol + sagitta_bound(&pts) + HULL_EPS * diam;
    let hull = convex_hull_ccw(&pts);
    SublevelPolygon::from_vertices(k, hull, tol)
}

/// Largest distance from an edge to the apex formed by extending its two
/// neighbouring edges; the true convex boundary lies in that triangle.
fn sagitta_bound(v: &[Vec2]) -> f64 {
    let m = v.len();
    let mut worst = 0.0f64;
    for i in 0..m {
        let (a, b) = (v[i], v[(i + 1) % m]);
        let (pa, nb) = (v[(i + m - 1) % m], v[(i + 2) % m]);
        let (da, db) = (a - pa, nb - b);
        let chord = b - a;
        let len = chord.norm();
        if len == 0.0 {
            continue;
        }
        let denom = da.cross(db);
        // Nearly collinear neighbours make the apex ill-conditioned; the gap
        // is then of the order of their own distance from the chord.
        let dev = ((pa - a).cross(chord).abs()).max((nb - a).cross(chord).abs()) / len;
        let bound = if denom.abs() <= 1e-9 * da.norm() * db.norm() {
            dev
        } else {
            let s = (b - a).cross(db) / denom;
            if s < -1e-9 {
                dev
            } else {
                ((da * s.max(0.0)).cross(chord) / len).abs()
            }
        };
        worst = worst.max(bound);
    }
    worst
}

const HULL_EPS: f64 = 1e-12;

/// Andrew's monotone chain. Points within `HULL_EPS` (relative) of being
/// collinear are dropped, so rounding noise on flat sides does not survive.
fn convex_hull_ccw(pts: &[Vec2]) -> Vec<Vec2> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b - a).cross(q - a) <= HULL_EPS * (b - a).norm() * (q - a).norm() {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Polygon refined by doubling the vertex count (from 512) until the support
/// values on 64 probe directions change by less than `1e-8`.
pub fn sublevel_polygon_refined(h: &Hamiltonian, k: f64) -> Result<SublevelPolygon> {
    let probes: Vec<Vec2> = (0..64)
        .map(|j| Vec2::polar(std::f64::consts::TAU * (j as f64 + 0.37) / 64.0))
        .collect();
    let mut m = DEFAULT_VERTICES;
    let mut poly = sublevel_polygon(h, k, m)?;
    while m < 1 << 16 {
        let next = sublevel_polygon(h, k, 2 * m)?;
        let change = probes
            .iter()
            .map(|&x| (next.support(x) - poly.support(x)).abs())
            .fold(0.0, f64::max);
        poly = next;
        m *= 2;
        if change < 1e-8 {
            break;
        }
    }
    Ok(poly)
}

/// `min H` over the line `{p : p.z = c}`, by golden-section search along it.
pub fn min_on_line(h: &Hamiltonian, z: Vec2, c: f64) -> f64 {
    let zn = z.norm();
    if zn == 0.0 {
        return if c == 0.0 { h.min_value() } else { f64::INFINITY };
    }
    let foot = z * (c / (zn * zn));
    let dir = z.perp() / zn;
    let f = |s: f64| h.eval(foot + dir * s);
    let s0 = (h.minimizer() - foot).dot(dir);
    let mut reach = 1.0 + (h.minimizer() - foot).norm();
    while reach < 1e12 && (f(s0 + reach) < f(s0 + 0.5 * reach) || f(s0 - reach) < f(s0 - 0.5 * reach)) {
        reach *= 2.0;
    }
    golden_min(f, s0 - reach, s0 + reach, 1e-13 * reach).1
}

/// `C_k(z)` without a polygon: the largest `c` with `min_on_line(z, c) <= k`.
pub fn cone_exact(h: &Hamiltonian, k: f64, z: Vec2) -> f64 {
    let zn = z.norm();
    if zn == 0.0 {
        return 0.0;
    }
    let lo0 = h.minimizer().dot(z);
    if k <= h.min_value() {
        return lo0;
    }
    let (mut lo, mut hi) = (lo0, lo0 + zn);
    while min_on_line(h, z, hi) <= k {
        lo = hi;
        hi = lo0 + 2.0 * (hi - lo0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if min_on_line(h, z, mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `k >= 0` with `C_k(z) >= c`, i.e. `max(0, min {H(p) : p.z >= c})`.
/// Infinite when `z = 0` and `c > 0`.
pub fn cone_level(h: &Hamiltonian, z: Vec2, c: f64) -> f64 {
    if z.norm() == 0.0 {
        return if c <= 0.0 { h.min_value().max(0.0) } else { f64::INFINITY };
    }
    if h.minimizer().dot(z) >= c {
        return h.min_value().max(0.0);
    }
    min_on_line(h, z, c).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportResidual {
    pub q: Vec2,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub z: Vec2,
    pub vertex: Vec2,
    /// Angle between `z` and the normal cone of `H` at the maximizing vertex.
    pub angle_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportIdentityReport {
    pub p: Vec2,
    pub k: f64,
    pub polygon_tol: f64,
    pub subgradient_residuals: Vec<SupportResidual>,
    pub max_residual: f64,
    pub direction_checks: Vec<DirectionCheck>,
    pub max_angle_error: f64,
    pub angular_tol: f64,
}

/// Angle from `z` to the cone spanned by the points of a subdifferential.
fn angle_to_cone(z: Vec2, pts: &[Vec2], shape: SubdiffShape) -> f64 {
    let ang = |a: Vec2, b: Vec2| a.cross(b).atan2(a.dot(b)).abs();
    match shape {
        SubdiffShape::Point => ang(z, pts[0]),
        _ => {
            let n = pts.len();
            // Inside the cone iff z is between two consecutive generators.
            let inside = (0..n).any(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                a.cross(z) >= 0.0 && z.cross(b) >= 0.0 && a.cross(b) >= 0.0
            });
            if inside {
                0.0
            } else {
                pts.iter().map(|&q| ang(z, q)).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Checks `C_{H(p)}(q) = p.q` for `q ∈ ∂H(p)`, and that each maximizing
/// vertex `p_z` of `C_{H(p)}(z)` has `z` in its normal cone.
pub fn support_identity_check(h: &Hamiltonian, p: Vec2) -> Result<SupportIdentityReport> {
    if (p - h.minimizer()).norm() <= 1e-12 * (1.0 + p.norm()) {
        return Err(Error::Precondition("support identity needs p away from the minimizer".into()));
    }
    let k = h.eval(p);
    let poly = sublevel_polygon_refined(h, k)?;
    let sd = subdifferential_set(h, p, 1e-4 * (1.0 + p.norm()))?;
    let subgradient_residuals: Vec<SupportResidual> = sd
        .extreme_points
        .iter()
        .map(|&q| SupportResidual {
            q,
            residual: (poly.support(q) - p.dot(q)).abs(),
        })
        .collect();
    let max_residual = subgradient_residuals.iter().map(|r| r.residual).fold(0.0, f64::max);

    let m = poly.vertices.len().max(1);
    let angular_tol = 4.0 * std::f64::consts::TAU / m as f64;
    let dirs: Vec<Vec2> = sd
        .extreme_points
        .iter()
        .map(|q| q.normalized())
        .chain((0..16).map(|j| Vec2::polar(std::f64::consts::TAU * (j as f64 + 0.5) / 16.0)))
        .collect();
    let direction_checks: Vec<DirectionCheck> = dirs
        .into_iter()
        .filter(|z| z.norm() > 0.0)
        .map(|z| {
            let (i, _) = poly.support_argmax(z);
            let v = poly.vertices[i];
            let angle_error = match subdifferential_set(h, v, 1e-5 * (1.0 + v.norm())) {
                Ok(s) => angle_to_cone(z, &s.extreme_points, s.shape),
                Err(_) => f64::INFINITY,
            };
            DirectionCheck {
                z,
                vertex: v,
                angle_error,
            }
        })
        .collect();
    let max_angle_error = direction_checks.iter().map(|d| d.angle_error).fold(0.0, f64::max);
    Ok(SupportIdentityReport {
        p,
        k,
        polygon_tol: poly.tol,
        subgradient_residuals,
        max_residual,
        direction_checks,
        max_angle_error,
        angular_tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginRow {
    pub k: f64,
    pub delta: f64,
    /// Smallest sampled `C` for this `(k, δ)`.
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    pub r: f64,
    /// Max of the table; the constant `C_R`.
    pub constant: f64,
    pub table: Vec<MarginRow>,
    pub directions: usize,
    pub cap: f64,
}

/// Smallest sampled `C` with `C_k(x) + δ|x| <= C_{k + Cδ}(x)` for 720 unit
/// directions, 32 levels in `[min H, R]` and `δ ∈ {0.1, 0.01, 0.001}`.
/// Fails with [`Error::ConeCap`] when some row needs more than `cap`.
pub fn cone_margin_constant(h: &Hamiltonian, r: f64, cap: f64) -> Result<MarginReport> {
    if !(r >= 1.0) {
        return Err(invalid("R", "must be at least 1"));
    }
    const DIRS: usize = 720;
    const LEVELS: usize = 32;
    const VERTICES: usize = 2048;
    let xs: Vec<Vec2> = (0..DIRS)
        .map(|j| Vec2::polar(std::f64::consts::TAU * j as f64 / DIRS as f64))
        .collect();
    let min = h.min_value();
    let ks: Vec<f64> = (0..LEVELS).map(|i| min + (r - min) * i as f64 / (LEVELS - 1) as f64).collect();
    let deltas = [0.1, 0.01, 0.001];
    let jobs: Vec<(f64, f64)> = ks.iter().flat_map(|&k| deltas.iter().map(move |&d| (k, d))).collect();
    let rows: Vec<Result<MarginRow>> = jobs
        .par_iter()
        .map(|&(k, delta)| {
            let base = sublevel_polygon(h, k, VERTICES)?;
            // Inscribed polygons underestimate: pad the left side by the base
            // polygon's tolerance so a pass certifies the true inequality.
            let need: Vec<f64> = xs.iter().map(|&x| base.support(x) + base.tol + delta).collect();
            let holds = |c: f64| -> Result<bool> {
                let up = sublevel_polygon(h, k + c * delta, VERTICES)?;
                Ok(xs.iter().zip(&need).all(|(&x, &n)| n <= up.support(x)))
            };
            // Bracket by doubling from a small C, then bisect to 1e-3 relative.
            let mut hi = 0.5f64.min(cap);
            while !holds(hi)? {
                if hi >= cap {
                    return Err(Error::ConeCap { cap });
                }
                hi = (2.0 * hi).min(cap);
            }
            let mut lo = if hi > 0.5 { 0.5 * hi } else { 0.0 };
            while hi - lo > 1e-3 * hi {
                let mid = 0.5 * (lo + hi);
                if holds(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(MarginRow { k, delta, c: hi })
        })
        .collect();
    let table = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let constant = table.iter().map(|r| r.c).fold(0.0, f64::max);
    Ok(MarginReport {
        r,
        constant,
        table,
        directions: DIRS,
        cap,
    })
}
