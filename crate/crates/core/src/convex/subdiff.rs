//! Subdifferential estimation from one-sided directional derivatives.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;
use crate::hamiltonian::ConvexOracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubdiffShape {
    Point,
    Segment,
    Polygon,
}

/// A convex point set approximating `∂f(p)`; extreme points run counterclockwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubdifferentialSet {
    pub base_point: Vec2,
    pub extreme_points: Vec<Vec2>,
    pub shape: SubdiffShape,
    pub tol: f64,
}

impl SubdifferentialSet {
    pub fn diameter(&self) -> f64 {
        let pts = &self.extreme_points;
        let mut d = 0.0f64;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }

    /// Centroid of the extreme points, a representative subgradient.
    pub fn center(&self) -> Vec2 {
        let n = self.extreme_points.len() as f64;
        self.extreme_points.iter().fold(Vec2::ZERO, |s, v| s + *v) / n
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SubdiffOptions {
    /// Number of equally spaced probe directions.
    pub directions: usize,
    /// Clustering and classification tolerance.
    pub tol: f64,
    /// Combine the quotients at `radius` and `radius / 2`. Turn this off for
    /// sampled data, whose kinks at the grid scale defeat the extrapolation.
    pub richardson: bool,
}

impl Default for SubdiffOptions {
    fn default() -> Self {
        SubdiffOptions {
            directions: 720,
            tol: 1e-6,
            richardson: true,
        }
    }
}

/// Estimates `∂f(p)` with default options.
pub fn subdifferential_set<F: ConvexOracle + ?Sized>(f: &F, p: Vec2, radius: f64) -> Result<SubdifferentialSet> {
    subdifferential_set_with(f, p, radius, SubdiffOptions::default())
}

/// Estimates `∂f(p)` as the intersection of the half-planes `q.θ <= f'(p; θ)`.
///
/// Each directional derivative is the forward quotient at `radius`, or by
/// default its Richardson combination with the quotient at `radius / 2`.
pub fn subdifferential_set_with<F: ConvexOracle + ?Sized>(
    f: &F,
    p: Vec2,
    radius: f64,
    opts: SubdiffOptions,
) -> Result<SubdifferentialSet> {
    if !(radius > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    if opts.directions < 4 {
        return Err(invalid("directions", "need at least 4"));
    }
    let f0 = f.eval(p);
    if !f0.is_finite() {
        return Err(Error::Precondition(format!("f is not finite at {p:?}")));
    }
    let m = opts.directions;
    let constraints: Vec<(Vec2, f64)> = (0..m)
        .map(|j| {
            let th = Vec2::polar(std::f64::consts::TAU * j as f64 / m as f64);
            let d1 = (f.eval(p + th * radius) - f0) / radius;
            if !opts.richardson {
                return (th, d1);
            }
            let d2 = (f.eval(p + th * (0.5 * radius)) - f0) / (0.5 * radius);
            (th, 2.0 * d2 - d1)
        })
        .collect();
    if constraints.iter().any(|(_, d)| !d.is_finite()) {
        return Err(Error::Precondition(format!("probe radius {radius} leaves the domain at {p:?}")));
    }
    let bound = constraints.iter().fold(0.0f64, |b, (_, d)| b.max(d.abs())) * 2.0 + 1.0;
    let mut poly: Vec<Vec2> = vec![
        Vec2::new(-bound, -bound),
        Vec2::new(bound, -bound),
        Vec2::new(bound, bound),
        Vec2::new(-bound, bound),
    ];
    let start = poly.clone();
    // Sampled or slightly non-convex data can make the exact half-planes
    // inconsistent; retry once as an ε-subgradient set with ε = tol / 4.
    for slack in [1e-12 * bound, 0.25 * opts.tol] {
        poly = start.clone();
        for &(th, d) in &constraints {
            poly = clip(&poly, th, d + slack);
            if poly.is_empty() {
                break;
            }
        }
        if !poly.is_empty() {
            return Ok(classify(p, poly, opts.tol));
        }
    }
    Err(Error::EmptySubdifferential { at: p, tol: opts.tol })
}

/// Sutherland-Hodgman clip of a convex polygon against `q.n <= c`.
fn clip(poly: &[Vec2], n: Vec2, c: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, &a) in poly.iter().enumerate() {
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (a.dot(n) - c, b.dot(n) - c);
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            out.push(a + (b - a) * (fa / (fa - fb)));
        }
    }
    out
}

/// Merges clustered vertices and reduces to point, segment or polygon.
pub(crate) fn classify(base: Vec2, mut pts: Vec<Vec2>, tol: f64) -> SubdifferentialSet {
    let mut merged: Vec<Vec2> = Vec::with_capacity(pts.len());
    for v in pts.drain(..) {
        if merged.last().is_none_or(|w| (*w - v).norm() > tol) {
            merged.push(v);
        }
    }
    while merged.len() > 1 && (merged[0] - merged[merged.len() - 1]).norm() <= tol {
        merged.pop();
    }
    let (mut ia, mut ib, mut diam) = (0, 0, 0.0f64);
    for i in 0..merged.len() {
        for j in i + 1..merged.len() {
            let d = (merged[i] - merged[j]).norm();
            if d > diam {
                (ia, ib, diam) = (i, j, d);
            }
        }
    }
    let centroid = merged.iter().fold(Vec2::ZERO, |s, v| s + *v) / merged.len().max(1) as f64;
    if diam <= tol {
        return SubdifferentialSet {
            base_point: base,
            extreme_points: vec![centroid],
            shape: SubdiffShape::Point,
            tol,
        };
    }
    let axis = (merged[ib] - merged[ia]) / diam;
    let off = |v: Vec2| (v - merged[ia]).cross(axis);
    let width = merged.iter().map(|&v| off(v)).fold(f64::NEG_INFINITY, f64::max)
        - merged.iter().map(|&v| off(v)).fold(f64::INFINITY, f64::min);
    if width <= tol {
        let (mut a, mut b) = (merged[ia], merged[ib]);
        if b.angle() < a.angle() {
            std::mem::swap(&mut a, &mut b);
        }
        return SubdifferentialSet {
            base_point: base,
            extreme_points: vec![a, b],
            shape: SubdiffShape::Segment,
            tol,
        };
    }
    // Drop vertices that are within tol of the chord through their neighbours.
    let mut verts = merged;
    loop {
        let n = verts.len();
        if n <= 3 {
            break;
        }
        let drop = (0..n).find(|&i| {
            let (a, v, b) = (verts[(i + n - 1) % n], verts[i], verts[(i + 1) % n]);
            let ab = b - a;
            ab.norm() > 0.0 && (v - a).cross(ab).abs() / ab.norm() <= tol
        });
        match drop {
            Some(i) => {
                verts.remove(i);
            }
            None => break,
        }
    }
    SubdifferentialSet {
        base_point: base,
        extreme_points: verts,
        shape: SubdiffShape::Polygon,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Hamiltonian;

    #[test]
    fn smooth_gradient_is_a_point() {
        let h = Hamiltonian::quadratic();
        let s = subdifferential_set(&h, Vec2::new(1.0, 2.0), 1e-3).unwrap();
        assert_eq!(s.shape, SubdiffShape::Point);
        assert!((s.extreme_points[0] - Vec2::new(1.0, 2.0)).norm() < 1e-8);
    }

    #[test]
    fn l1_kink_gives_segment() {
        let h = Hamiltonian::power_norm(1.0, 1.0, 1.0).unwrap();
        let s = subdifferential_set(&h, Vec2::new(0.0, 1.0), 1e-3).unwrap();
        assert_eq!(s.shape, SubdiffShape::Segment);
        let mut xs: Vec<f64> = s.extreme_points.iter().map(|v| v.x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-9 && (xs[1] - 1.0).abs() < 1e-9);
        assert!(s.extreme_points.iter().all(|v| (v.y - 1.0).abs() < 1e-9));
    }

    #[test]
    fn origin_of_l1_is_a_square() {
        let h = Hamiltonian::power_norm(1.0, 1.0, 1.0).unwrap();
        let s = subdifferential_set(&h, Vec2::ZERO, 1e-3).unwrap();
        assert_eq!(s.shape, SubdiffShape::Polygon);
        assert_eq!(s.extreme_points.len(), 4);
        for v in &s.extreme_points {
            assert!((v.x.abs() - 1.0).abs() < 1e-9 && (v.y.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nonconvex_data_can_be_empty() {
        let f = |p: Vec2| -p.norm();
        assert!(matches!(
            subdifferential_set(&f, Vec2::ZERO, 1e-2),
            Err(Error::EmptySubdifferential { .. })
        ));
    }
}
