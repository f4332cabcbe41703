//! Marching-squares level curves with crossings refined on the oracle.

use std::collections::HashMap;

use serde::Serialize;

use crate::geom::Vec2;
use crate::grid::GridField;
use crate::hamiltonian::ConvexOracle;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + (*a - *b).norm(),
            _ => open,
        }
    }
}

/// Edge ids: `2 * node` for the edge to the right of a node, `2 * node + 1`
/// for the edge above it.
fn h_edge(nx: usize, i: usize, j: usize) -> usize {
    2 * (j * nx + i)
}

fn v_edge(nx: usize, i: usize, j: usize) -> usize {
    2 * (j * nx + i) + 1
}

/// Curves `{f = level}` traced through `samples` (which must hold `f` at the
/// grid nodes). Each crossing is located by bisection on `f` along its cell edge.
pub fn level_curves<F: ConvexOracle + ?Sized>(f: &F, samples: &GridField, level: f64) -> Vec<Polyline> {
    let (nx, ny) = (samples.nx(), samples.ny());
    let inside = |i: usize, j: usize| samples.at(i, j) < level;
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [inside(i, j), inside(i + 1, j), inside(i + 1, j + 1), inside(i, j + 1)];
            let e = [h_edge(nx, i, j), v_edge(nx, i + 1, j), h_edge(nx, i, j + 1), v_edge(nx, i, j)];
            let crossed: Vec<usize> = (0..4).filter(|&k| c[k] != c[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => link(e[crossed[0]], e[crossed[1]]),
                4 => {
                    let center = samples.point(i, j) + Vec2::new(0.5, 0.5) * samples.spacing();
                    if (f.eval(center) < level) == c[0] {
                        link(e[0], e[1]);
                        link(e[2], e[3]);
                    } else {
                        link(e[3], e[0]);
                        link(e[1], e[2]);
                    }
                }
                _ => {}
            }
        }
    }

    let crossing = |edge: usize| -> Vec2 {
        let node = edge / 2;
        let (i, j) = (node % nx, node / nx);
        let (a, b) = if edge % 2 == 0 { ((i, j), (i + 1, j)) } else { ((i, j), (i, j + 1)) };
        let (mut pin, mut pout) = (samples.point(a.0, a.1), samples.point(b.0, b.1));
        if !inside(a.0, a.1) {
            std::mem::swap(&mut pin, &mut pout);
        }
        for _ in 0..64 {
            let mid = (pin + pout) * 0.5;
            if mid == pin || mid == pout {
                break;
            }
            if f.eval(mid) < level {
                pin = mid;
            } else {
                pout = mid;
            }
        }
        (pin + pout) * 0.5
    };

    let mut keys: Vec<usize> = adj.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::with_capacity(keys.len());
    let mut curves = Vec::new();
    // Open chains start at degree-one edges; the rest are cycles.
    let starts: Vec<usize> = keys
        .iter()
        .copied()
        .filter(|k| adj[k].len() == 1)
        .chain(keys.iter().copied())
        .collect();
    for start in starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut cur = start;
        let closed;
        loop {
            let next = adj[&cur].iter().copied().find(|n| !visited.contains_key(n));
            match next {
                Some(n) => {
                    visited.insert(n, true);
                    chain.push(n);
                    cur = n;
                }
                None => {
                    closed = chain.len() > 2 && adj[&cur].contains(&start);
                    break;
                }
            }
        }
        curves.push(Polyline {
            points: chain.into_iter().map(crossing).collect(),
            closed,
        });
    }
    curves
}

/// Longest run of consecutive vertices that all lie within `tol` of the chord
/// joining the run's ends, scanning each curve once (cyclically if closed).
/// Returns the chord endpoints.
pub fn longest_straight_run(curve: &Polyline, tol: f64) -> Option<(Vec2, Vec2)> {
    let pts = &curve.points;
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let total = if curve.closed { 2 * n } else { n };
    let at = |k: usize| pts[k % n];
    let straight = |s: usize, e: usize| {
        let (a, b) = (at(s), at(e));
        let ab = b - a;
        let len = ab.norm();
        len > 0.0 && (s + 1..e).all(|k| ((at(k) - a).cross(ab) / len).abs() <= tol)
    };
    let mut best: Option<(Vec2, Vec2)> = None;
    let mut best_len = 0.0;
    let mut s = 0;
    while s + 2 < total && s < n {
        let mut e = s + 2;
        if !straight(s, e) {
            s += 1;
            continue;
        }
        while e + 1 < total && e + 1 - s < n && straight(s, e + 1) {
            e += 1;
        }
        let len = (at(e) - at(s)).norm();
        if len > best_len {
            best_len = len;
            best = Some((at(s), at(e)));
        }
        s = e.max(s + 1);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::hamiltonian::Hamiltonian;

    #[test]
    fn circle_level_curve() {
        let h = Hamiltonian::quadratic();
        let g = GridField::covering(Rect::centered(2.0), 81, |p| h.eval(p)).unwrap();
        let curves = level_curves(&h, &g, 0.5);
        assert_eq!(curves.len(), 1);
        assert!(curves[0].closed);
        for p in &curves[0].points {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        assert!((curves[0].length() - std::f64::consts::TAU).abs() < 1e-2);
        // Only near-coincident crossings can look straight on a circle.
        let run = longest_straight_run(&curves[0], 1e-11).map_or(0.0, |(a, b)| (b - a).norm());
        assert!(run < 0.1, "{run}");
    }

    #[test]
    fn diamond_has_straight_sides() {
        let h = Hamiltonian::power_norm(1.0, 1.0, 1.0).unwrap();
        let g = GridField::covering(Rect::centered(2.0), 81, |p| h.eval(p)).unwrap();
        let curves = level_curves(&h, &g, 1.0);
        let (a, b) = longest_straight_run(&curves[0], 1e-11).unwrap();
        assert!((a - b).norm() > 1.3);
        assert!((h.eval(a) - 1.0).abs() < 1e-12 && (h.eval(b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_curves_at_the_boundary() {
        let f = |p: Vec2| p.x;
        let g = GridField::covering(Rect::centered(1.0), 11, |p| p.x).unwrap();
        let curves = level_curves(&f, &g, 0.33);
        assert_eq!(curves.len(), 1);
        assert!(!curves[0].closed);
        assert_eq!(curves[0].points.len(), 11);
    }
}
