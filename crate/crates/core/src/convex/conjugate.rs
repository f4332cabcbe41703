//! Discrete Legendre-Fenchel transform on uniform grids.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;
use crate::hamiltonian::{ConvexOracle, Hamiltonian};

/// Output of [`conjugate_grid`]: the sampled conjugate, the maximizing primal
/// node for every dual node, and the dual nodes whose maximizer sits on the
/// primal boundary (where the supremum may not be attained in the box).
#[derive(Clone, Debug)]
pub struct Conjugate {
    pub field: GridField,
    pub argmax: Vec<Vec2>,
    pub on_boundary: Vec<Vec2>,
}

/// Max over `i` of `s x_i - f_i` for every sorted slope `s`, with `x_i = x0 + i h`.
///
/// Works on the lower convex hull of the samples and a monotone pointer, so
/// the cost is linear in `f.len() + s.len()`. Ties resolve to the lowest index.
fn conjugate_1d(x0: f64, h: f64, f: &[f64], s: &[f64], hull: &mut Vec<usize>, out: &mut [(f64, usize)]) {
    hull.clear();
    let x = |i: usize| x0 + i as f64 * h;
    for (i, &fi) in f.iter().enumerate() {
        if !fi.is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b when it is not strictly below the chord from a to i.
            let lhs = (f[b] - f[a]) * (x(i) - x(a));
            let rhs = (fi - f[a]) * (x(b) - x(a));
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut k = 0;
    for (slot, &sj) in out.iter_mut().zip(s) {
        if hull.is_empty() {
            *slot = (f64::NEG_INFINITY, 0);
            continue;
        }
        let val = |i: usize| sj * x(i) - f[i];
        while k + 1 < hull.len() && val(hull[k + 1]) > val(hull[k]) {
            k += 1;
        }
        *slot = (val(hull[k]), hull[k]);
    }
}

fn axis(min: f64, h: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| min + i as f64 * h).collect()
}

/// Conjugate of sampled data `L(q) = max_nodes (p.q - f(p))` on a dual grid
/// covering `dual` with `n` nodes along x. Boundary maximizers are reported,
/// not rejected.
pub fn conjugate_grid(primal: &GridField, dual: Rect, n: usize) -> Result<Conjugate> {
    if n < 2 {
        return Err(invalid("resolution", "need at least 2 dual nodes"));
    }
    if !(dual.width() > 0.0 && dual.height() > 0.0) {
        return Err(invalid("dual", "empty dual box"));
    }
    let (nx, ny) = (primal.nx(), primal.ny());
    let (o, h) = (primal.origin(), primal.spacing());
    let hd = dual.width() / (n - 1) as f64;
    let (mx, my) = (n, (dual.height() / hd).round() as usize + 1);
    let q1 = axis(dual.min.x, hd, mx);
    let q2 = axis(dual.min.y, hd, my);
    let vals = primal.values();

    // Rows: g[j][a] = max_i (q1_a x_i - f_ij).
    let rows: Vec<Vec<(f64, usize)>> = (0..ny)
        .into_par_iter()
        .map_init(Vec::new, |hull, j| {
            let mut out = vec![(0.0, 0); mx];
            conjugate_1d(o.x, h, &vals[j * nx..(j + 1) * nx], &q1, hull, &mut out);
            out
        })
        .collect();

    // Columns: L(a, b) = max_j (q2_b y_j + g[j][a]).
    let cols: Vec<Vec<(f64, usize)>> = (0..mx)
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![0.0; ny]),
            |(hull, neg), a| {
                for (j, slot) in neg.iter_mut().enumerate() {
                    *slot = -rows[j][a].0;
                }
                let mut out = vec![(0.0, 0); my];
                conjugate_1d(o.y, h, neg, &q2, hull, &mut out);
                out
            },
        )
        .collect();

    let mut values = vec![0.0; mx * my];
    let mut argmax = vec![Vec2::ZERO; mx * my];
    let mut on_boundary = Vec::new();
    for b in 0..my {
        for a in 0..mx {
            let (v, j) = cols[a][b];
            let i = rows[j][a].1;
            values[b * mx + a] = v;
            argmax[b * mx + a] = primal.point(i, j);
            if i == 0 || i + 1 == nx || j == 0 || j + 1 == ny {
                on_boundary.push(Vec2::new(q1[a], q2[b]));
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("primal samples are all infinite".into()));
    }
    let field = GridField::new(dual.min, hd, mx, my, values)?;
    Ok(Conjugate {
        field,
        argmax,
        on_boundary,
    })
}

/// Legendre transform of sampled data; fails with the offending dual points
/// when any maximizer lies on the primal boundary.
pub fn legendre_transform_grid(primal: &GridField, dual: Rect, n: usize) -> Result<GridField> {
    let c = conjugate_grid(primal, dual, n)?;
    if !c.on_boundary.is_empty() {
        return Err(Error::DualRange {
            offending: c.on_boundary,
        });
    }
    Ok(c.field)
}

/// Legendre transform of an oracle sampled on `primal` with `resolution`
/// nodes per side, evaluated on a dual grid over `dual` with the same count.
pub fn legendre_transform<F: ConvexOracle + ?Sized>(
    f: &F,
    primal: Rect,
    dual: Rect,
    resolution: usize,
) -> Result<GridField> {
    let grid = GridField::covering(primal, resolution, |p| f.eval(p))?;
    legendre_transform_grid(&grid, dual, resolution)
}

/// A primal/dual pair for [`fenchel_gap`]. Mark `subgradient` when `q` is
/// known to lie in the subdifferential of `H` at `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FenchelPair {
    pub p: Vec2,
    pub q: Vec2,
    pub subgradient: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FenchelGap {
    /// Max of `(p.q - H(p) - L(q))^+`; Young's inequality says it is zero.
    pub violation: f64,
    /// Max of `|H(p) + L(q) - p.q|` over subgradient pairs (`None` if there are none).
    pub equality_residual: Option<f64>,
}

/// Fenchel-Young diagnostics with `L` read by bilinear interpolation.
/// Pairs whose `q` falls outside the `L` grid are skipped.
pub fn fenchel_gap(h: &Hamiltonian, l: &GridField, pairs: &[FenchelPair]) -> FenchelGap {
    let mut violation = 0.0f64;
    let mut eq: Option<f64> = None;
    for pair in pairs {
        let Some(lq) = l.interp(pair.q) else { continue };
        let gap = h.eval(pair.p) + lq - pair.p.dot(pair.q);
        violation = violation.max(-gap);
        if pair.subgradient {
            eq = Some(eq.unwrap_or(0.0).max(gap.abs()));
        }
    }
    FenchelGap {
        violation,
        equality_residual: eq,
    }
}
