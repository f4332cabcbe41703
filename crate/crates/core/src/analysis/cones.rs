//! Cone-Lipschitz and comparison-with-cones verifiers on grid fields.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone::{cone_exact, cone_level, sublevel_polygon, SublevelPolygon};
use crate::error::{invalid, Result};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;
use crate::hamiltonian::Hamiltonian;

/// Half-width of the offset stencil used for grid pairs.
pub const DEFAULT_STENCIL: usize = 4;

fn stencil_offsets(m: usize) -> Vec<(isize, isize)> {
    let m = m as isize;
    (-m..=m)
        .flat_map(|b| (-m..=m).map(move |a| (a, b)))
        .filter(|&o| o != (0, 0))
        .collect()
}

/// Largest `u(x) - u(x - o)` over node pairs for the grid offset `o`, with
/// the maximizing `x`.
fn max_increment(u: &GridField, (a, b): (isize, isize)) -> (f64, Vec2, Vec2) {
    let (nx, ny) = (u.nx() as isize, u.ny() as isize);
    let mut best = (f64::NEG_INFINITY, Vec2::ZERO, Vec2::ZERO);
    for j in b.max(0)..ny + b.min(0) {
        for i in a.max(0)..nx + a.min(0) {
            let (i0, j0) = ((i - a) as usize, (j - b) as usize);
            let d = u.at(i as usize, j as usize) - u.at(i0, j0);
            if d > best.0 {
                best = (d, u.point(i as usize, j as usize), u.point(i0, j0));
            }
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzCheck {
    pub k: f64,
    /// Largest `u(x) - u(y) - C_k(x - y)` over the sampled pairs.
    pub violation: f64,
    /// The pair `(x, y)` attaining it.
    pub witness: Option<[Vec2; 2]>,
    pub stencil: usize,
}

/// Checks `u(x) - u(y) <= C_k(x - y)` on all node pairs whose index offset
/// lies in the `stencil` square. On a rectangle, segments are inside the
/// domain and the cone is additive along them, so short pairs suffice.
pub fn cone_lipschitz_check(u: &GridField, h: &Hamiltonian, k: f64) -> Result<LipschitzCheck> {
    cone_lipschitz_check_with(u, h, k, DEFAULT_STENCIL)
}

pub fn cone_lipschitz_check_with(u: &GridField, h: &Hamiltonian, k: f64, stencil: usize) -> Result<LipschitzCheck> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(invalid("k", format!("must be finite and >= 0, got {k}")));
    }
    let worst = stencil_offsets(stencil.max(1))
        .into_par_iter()
        .map(|o| {
            let (d, x, y) = max_increment(u, o);
            (d - cone_exact(h, k, x - y), x, y)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec2::ZERO, Vec2::ZERO),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    Ok(LipschitzCheck {
        k,
        violation: worst.0,
        witness: worst.0.is_finite().then_some([worst.1, worst.2]),
        stencil,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzLevel {
    /// Smallest `k` passing [`cone_lipschitz_check`] on the same pairs.
    pub k: f64,
    pub witness: Option<[Vec2; 2]>,
}

/// The cone-Lipschitz level of `u`: `max over pairs` of the smallest `k` with
/// `C_k(x - y) >= u(x) - u(y)`.
pub fn cone_lipschitz_level(u: &GridField, h: &Hamiltonian) -> LipschitzLevel {
    let best = stencil_offsets(DEFAULT_STENCIL)
        .into_par_iter()
        .map(|o| {
            let (d, x, y) = max_increment(u, o);
            (cone_level(h, x - y, d), x, y)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec2::ZERO, Vec2::ZERO),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    LipschitzLevel {
        k: best.0.max(0.0),
        witness: best.0.is_finite().then_some([best.1, best.2]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CcOptions {
    pub rects: usize,
    /// Cone vertices sampled per rectangle.
    pub vertices: usize,
    /// Levels `k`; by default `K 2^j`, `j = -4..=1`, with `K` the
    /// cone-Lipschitz level of the field.
    pub levels: Option<Vec<f64>>,
    pub seed: u64,
    /// Boundary points per grid cell along the edges of each rectangle.
    pub boundary_refine: usize,
    pub polygon_vertices: usize,
    pub tol: f64,
}

impl Default for CcOptions {
    fn default() -> Self {
        CcOptions {
            rects: 48,
            vertices: 8,
            levels: None,
            seed: 0x5eed,
            boundary_refine: 4,
            polygon_vertices: 2048,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CcSide {
    Above,
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CcWitness {
    pub rect: Rect,
    pub x0: Vec2,
    pub k: f64,
    pub side: CcSide,
    /// Interior node beating the boundary.
    pub at: Vec2,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CcSampling {
    pub seed: u64,
    pub rects: usize,
    pub vertices_per_rect: usize,
    pub levels: Vec<f64>,
    pub boundary_refine: usize,
    pub polygon_vertices: usize,
    pub checks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CcReport {
    pub passes: bool,
    /// Largest amount by which an interior extremum beats the boundary,
    /// after removing the polygon error of the cone evaluation.
    pub worst_violation: f64,
    /// The same before removing the polygon error.
    pub worst_raw_violation: f64,
    pub tol: f64,
    pub witness: Option<CcWitness>,
    pub sampling: CcSampling,
}

struct Trial {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
    x0: Vec2,
}

fn sample_trials(u: &GridField, opts: &CcOptions) -> Vec<Trial> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(opts.seed);
    let (nx, ny) = (u.nx(), u.ny());
    let mut out = Vec::new();
    if nx < 6 || ny < 6 {
        return out;
    }
    let span = |n: usize, rng: &mut Xoshiro256PlusPlus| {
        // Index interval inside 1..=n-2 with at least three cells.
        let max_w = ((n - 3) / 2).max(3).min(n - 3);
        let w = rng.random_range(3..=max_w);
        let s = rng.random_range(1..=n - 2 - w);
        (s, s + w)
    };
    for _ in 0..opts.rects {
        let (i0, i1) = span(nx, &mut rng);
        let (j0, j1) = span(ny, &mut rng);
        let rect = Rect::new(u.point(i0, j0), u.point(i1, j1));
        let inside = |p: Vec2| rect.contains(p);
        let mut placed = 0;
        let mut tries = 0;
        while placed < opts.vertices && tries < 64 * opts.vertices.max(1) {
            tries += 1;
            let x0 = if placed % 2 == 0 {
                u.point(rng.random_range(0..nx), rng.random_range(0..ny))
            } else {
                rect.center() + Vec2::polar(rng.random_range(0.0..std::f64::consts::TAU)) * rect.diameter()
            };
            if inside(x0) {
                continue;
            }
            out.push(Trial { i0, i1, j0, j1, x0 });
            placed += 1;
        }
    }
    out
}

fn boundary_points(u: &GridField, t: &Trial, refine: usize) -> Vec<Vec2> {
    let (a, b) = (u.point(t.i0, t.j0), u.point(t.i1, t.j1));
    let h = u.spacing() / refine.max(1) as f64;
    let mut pts = Vec::new();
    let mut edge = |p: Vec2, q: Vec2| {
        let n = ((q - p).norm() / h).round().max(1.0) as usize;
        for s in 0..n {
            pts.push(p + (q - p) * (s as f64 / n as f64));
        }
    };
    let (c, d) = (Vec2::new(b.x, a.y), Vec2::new(a.x, b.y));
    edge(a, c);
    edge(c, b);
    edge(b, d);
    edge(d, a);
    pts
}

/// Samples rectangles `V`, cone vertices `x0` outside `V` and levels `k`, and
/// checks that `u - C_k(. - x0)` attains its max over `V` on the boundary and
/// `u + C_k(x0 - .)` its min.
pub fn cone_comparison_check(u: &GridField, h: &Hamiltonian, opts: &CcOptions) -> Result<CcReport> {
    let levels: Vec<f64> = match &opts.levels {
        Some(l) => l.clone(),
        None => {
            let k = cone_lipschitz_level(u, h).k;
            let mut l: Vec<f64> = (-4..=1).map(|j| k * 2f64.powi(j)).collect();
            l.dedup();
            l
        }
    };
    let levels: Vec<f64> = levels.into_iter().filter(|&k| k >= h.min_value()).collect();
    let polys: Vec<SublevelPolygon> = levels
        .iter()
        .map(|&k| sublevel_polygon(h, k, opts.polygon_vertices))
        .collect::<Result<_>>()?;
    let trials = sample_trials(u, opts);

    type Best = (f64, f64, Option<CcWitness>);
    let fold = |a: Best, b: Best| -> Best {
        let raw = a.1.max(b.1);
        if b.0 > a.0 {
            (b.0, raw, b.2)
        } else {
            (a.0, raw, a.2)
        }
    };
    let (worst, worst_raw, witness) = trials
        .par_iter()
        .map(|t| {
            let bd = boundary_points(u, t, opts.boundary_refine);
            let bd_vals: Vec<f64> = bd.iter().map(|&p| u.interp_clamped(p)).collect();
            let interior: Vec<(Vec2, f64)> = (t.j0 + 1..t.j1)
                .flat_map(|j| (t.i0 + 1..t.i1).map(move |i| (i, j)))
                .map(|(i, j)| (u.point(i, j), u.at(i, j)))
                .collect();
            let reach = bd.iter().fold(0.0f64, |m, p| m.max((*p - t.x0).norm()));
            let rect = Rect::new(u.point(t.i0, t.j0), u.point(t.i1, t.j1));
            let mut best: Best = (f64::NEG_INFINITY, f64::NEG_INFINITY, None);
            for poly in &polys {
                let allowance = 2.0 * poly.tol * reach;
                for side in [CcSide::Above, CcSide::Below] {
                    // Above: max of u - C(x - x0). Below: max of -(u + C(x0 - x)).
                    let g = |p: Vec2, v: f64| match side {
                        CcSide::Above => v - poly.support(p - t.x0),
                        CcSide::Below => -(v + poly.support(t.x0 - p)),
                    };
                    let bmax = bd.iter().zip(&bd_vals).map(|(&p, &v)| g(p, v)).fold(f64::NEG_INFINITY, f64::max);
                    let (imax, at) = interior
                        .iter()
                        .map(|&(p, v)| (g(p, v), p))
                        .fold((f64::NEG_INFINITY, Vec2::ZERO), |a, b| if b.0 > a.0 { b } else { a });
                    let raw = imax - bmax;
                    let v = raw - allowance;
                    let w = CcWitness {
                        rect,
                        x0: t.x0,
                        k: poly.k,
                        side,
                        at,
                        violation: v,
                    };
                    best = fold(best, (v, raw, Some(w)));
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY, None), fold);

    let worst_violation = worst.max(0.0);
    let passes = worst_violation <= opts.tol;
    Ok(CcReport {
        passes,
        worst_violation,
        worst_raw_violation: worst_raw.max(0.0),
        tol: opts.tol,
        witness: witness.filter(|w| w.violation > 0.0),
        sampling: CcSampling {
            seed: opts.seed,
            rects: opts.rects,
            vertices_per_rect: opts.vertices,
            levels,
            boundary_refine: opts.boundary_refine,
            polygon_vertices: opts.polygon_vertices,
            checks: trials.len() * polys.len() * 2,
        },
    })
}
