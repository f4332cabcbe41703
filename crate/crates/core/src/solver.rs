//! Cone-median relaxation for the Dirichlet problem on a rectangle.
//!
//! At an interior node `x` the value `v` is replaced by the root of
//! `Ŝ^+(v) = -Ŝ^-(v)` on a ring `∂B(x, ρ)`: the smallest cone level that
//! bounds the ring from above equals the one that bounds it from below.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{cone_comparison_check, cone_lipschitz_check, cone_lipschitz_level, CcOptions, CcReport};
use crate::cone::{cone_exact, cone_level};
use crate::error::{invalid, Error, Result};
use crate::flow::{CriteriaReport, Lagrangian};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;
use crate::hamiltonian::Hamiltonian;

pub const DEFAULT_DIRECTIONS: usize = 64;
/// Default ring radius in grid cells. Bilinear reads on the ring err by
/// `O(h^2)`, which the update amplifies by `1/ρ^2`; four cells keeps that
/// below the angular error of 64 directions.
pub const DEFAULT_STENCIL_CELLS: f64 = 4.0;

pub type BoundaryFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct DirichletProblem {
    pub domain: Rect,
    pub g: BoundaryFn,
    pub h: Hamiltonian,
    /// Nodes along x; the spacing is `width / (n - 1)`.
    pub n: usize,
    /// Ring radius; `DEFAULT_STENCIL_CELLS` cells by default. Must be at least `2 h`.
    pub stencil_radius: Option<f64>,
}

impl fmt::Debug for DirichletProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletProblem")
            .field("domain", &self.domain)
            .field("h", &self.h.family())
            .field("n", &self.n)
            .field("stencil_radius", &self.stencil_radius)
            .finish_non_exhaustive()
    }
}

impl DirichletProblem {
    pub fn new(domain: Rect, h: Hamiltonian, n: usize, g: impl Fn(Vec2) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let p = DirichletProblem {
            domain,
            g: Arc::new(g),
            h,
            n,
            stencil_radius: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stencil_radius(mut self, r: f64) -> Result<Self> {
        self.stencil_radius = Some(r);
        self.validate()?;
        Ok(self)
    }

    pub fn spacing(&self) -> f64 {
        self.domain.width() / (self.n - 1) as f64
    }

    fn ny(&self) -> usize {
        (self.domain.height() / self.spacing()).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(invalid("n", "need at least 5 nodes per side"));
        }
        if !(self.domain.width() > 0.0 && self.domain.height() > 0.0) {
            return Err(invalid("domain", "must have positive width and height"));
        }
        let h = self.spacing();
        let ny = self.ny();
        if ny < 5 || ((ny - 1) as f64 * h - self.domain.height()).abs() > 1e-9 * self.domain.height() {
            return Err(invalid("domain", "height must be a multiple of the spacing"));
        }
        if let Some(r) = self.stencil_radius {
            if !(r >= 2.0 * h * (1.0 - 1e-12) && r.is_finite()) {
                return Err(invalid("stencil_radius", format!("{r} is below twice the spacing {h}")));
            }
        }
        check_normalized(&self.h)?;
        Ok(())
    }

    fn stencil_cells(&self) -> f64 {
        self.stencil_radius.map_or(DEFAULT_STENCIL_CELLS, |r| r / self.spacing())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Round cones: the update is the midpoint of the ring extremes.
    Midpoint,
    /// Cones `ψ(k) N(z)` for a fixed gauge `N`.
    Scaled,
    /// Cones tabulated per ring direction over a range of levels.
    Table,
}

#[derive(Clone, Debug)]
enum Gauge {
    Midpoint,
    /// Reciprocal unit-level cone values along `θ_j` and along `-θ_j`.
    Scaled { w: Vec<f64>, w_opp: Vec<f64> },
    /// Gauge `κ_j(c) = min {H(p) : p.θ_j >= c}` sampled per direction.
    Table(Vec<GaugeTable>),
}

/// The per-node update on a ring of `directions` equispaced samples.
#[derive(Clone, Debug)]
pub struct RingScheme {
    directions: usize,
    gauge: Gauge,
}

const HOMOGENEITY_TOL: f64 = 1e-6;
const TABLE_LEVELS: usize = 1024;

impl RingScheme {
    /// Picks the cheapest exact form of the update for `h`. `k_max` bounds the
    /// levels tabulated when `h` has no scaling structure.
    pub fn new(h: &Hamiltonian, directions: usize, k_max: f64) -> Result<Self> {
        check_directions(directions)?;
        check_normalized(h)?;
        if h.is_radial() {
            return Ok(RingScheme {
                directions,
                gauge: Gauge::Midpoint,
            });
        }
        let dirs = unit_dirs(directions);
        let probe: Vec<[f64; 3]> = dirs
            .par_iter()
            .map(|&d| [0.25, 1.0, 4.0].map(|k| cone_exact(h, k, d)))
            .collect();
        let scaled = probe.iter().all(|c| {
            c[1] > 0.0
                && ((c[0] / c[1]) / (probe[0][0] / probe[0][1]) - 1.0).abs() < HOMOGENEITY_TOL
                && ((c[2] / c[1]) / (probe[0][2] / probe[0][1]) - 1.0).abs() < HOMOGENEITY_TOL
        });
        if scaled {
            let w: Vec<f64> = probe.iter().map(|c| 1.0 / c[1]).collect();
            let w_opp = (0..directions).map(|j| w[(j + directions / 2) % directions]).collect();
            return Ok(RingScheme {
                directions,
                gauge: Gauge::Scaled { w, w_opp },
            });
        }
        Self::tabulated(h, directions, k_max)
    }

    /// The tabulated form regardless of structure, for cross-checks.
    pub fn tabulated(h: &Hamiltonian, directions: usize, k_max: f64) -> Result<Self> {
        check_directions(directions)?;
        if !(k_max > 0.0 && k_max.is_finite()) {
            return Err(invalid("k_max", "must be positive"));
        }
        let tables = unit_dirs(directions)
            .par_iter()
            .map(|&d| GaugeTable::new(h, d, k_max))
            .collect();
        Ok(RingScheme {
            directions,
            gauge: Gauge::Table(tables),
        })
    }

    pub fn kind(&self) -> SchemeKind {
        match self.gauge {
            Gauge::Midpoint => SchemeKind::Midpoint,
            Gauge::Scaled { .. } => SchemeKind::Scaled,
            Gauge::Table { .. } => SchemeKind::Table,
        }
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    /// Unit ring offsets `θ_j`, matching the order of `ring` in [`Self::update`].
    pub fn offsets(&self) -> Vec<Vec2> {
        unit_dirs(self.directions)
    }

    /// The new center value given the ring values `u(x + ρ θ_j)`.
    pub fn update(&self, ring: &[f64], radius: f64) -> f64 {
        self.update_from(ring, radius, f64::NAN)
    }

    /// As [`Self::update`], starting the root search at `guess`.
    pub fn update_from(&self, ring: &[f64], radius: f64, guess: f64) -> f64 {
        debug_assert_eq!(ring.len(), self.directions);
        let (lo, hi) = ring
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo <= 0.0 {
            return lo;
        }
        match &self.gauge {
            Gauge::Midpoint => 0.5 * (lo + hi),
            Gauge::Scaled { w, w_opp } => scaled_root(ring, w, w_opp, lo, hi, guess),
            Gauge::Table(t) => {
                let n = self.directions;
                let f = |v: f64| {
                    let a = (0..n).fold(0.0f64, |m, j| m.max(t[j].eval((ring[j] - v) / radius)));
                    let b = (0..n).fold(0.0f64, |m, j| m.max(t[(j + n / 2) % n].eval((v - ring[j]) / radius)));
                    a - b
                };
                illinois(f, lo, hi)
            }
        }
    }
}

/// `min H = H(0) = 0`; superlinear growth is not needed by the scheme.
fn check_normalized(h: &Hamiltonian) -> Result<()> {
    if h.minimizer().norm() > 1e-9 || h.min_value().abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "the Hamiltonian must have min H = H(0) = 0, found min {} at {:?}",
            h.min_value(),
            h.minimizer()
        )));
    }
    Ok(())
}

fn check_directions(d: usize) -> Result<()> {
    if d < 8 || d % 2 != 0 {
        return Err(invalid("directions", "need an even count of at least 8"));
    }
    Ok(())
}

fn unit_dirs(n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|j| Vec2::polar(std::f64::consts::TAU * j as f64 / n as f64))
        .collect()
}

/// Root of `max_j (u_j - v) w_j = max_j (v - u_j) w'_j`. Both sides are
/// piecewise linear, so intersecting the active pieces is exact once they
/// are the right ones; the bracket keeps the iteration safe.
fn scaled_root(u: &[f64], w: &[f64], w_opp: &[f64], mut lo: f64, mut hi: f64, guess: f64) -> f64 {
    let eps = 4.0 * f64::EPSILON * (hi - lo + lo.abs().max(hi.abs()));
    let mut v = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    for _ in 0..100 {
        let (mut a, mut ia) = (f64::NEG_INFINITY, 0);
        let (mut b, mut ib) = (f64::NEG_INFINITY, 0);
        for j in 0..u.len() {
            let x = (u[j] - v) * w[j];
            if x > a {
                a = x;
                ia = j;
            }
            let y = (v - u[j]) * w_opp[j];
            if y > b {
                b = y;
                ib = j;
            }
        }
        if a == b {
            return v;
        }
        if a > b {
            lo = v;
        } else {
            hi = v;
        }
        let cand = (u[ia] * w[ia] + u[ib] * w_opp[ib]) / (w[ia] + w_opp[ib]);
        if (cand - v).abs() <= eps || hi - lo <= eps {
            return cand.clamp(lo, hi);
        }
        v = if cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
    }
    v
}

/// `κ(c)` on a uniform grid of `c` from `C_0(θ)` to `C_{k_max}(θ)`; convex
/// and nondecreasing, read by linear interpolation and extrapolated past the
/// last node.
#[derive(Clone, Debug)]
struct GaugeTable {
    c0: f64,
    dc: f64,
    k: Vec<f64>,
}

impl GaugeTable {
    fn new(h: &Hamiltonian, dir: Vec2, k_max: f64) -> Self {
        let c0 = cone_exact(h, 0.0, dir);
        let c1 = cone_exact(h, k_max, dir);
        let dc = (c1 - c0) / TABLE_LEVELS as f64;
        let mut k: Vec<f64> = (0..=TABLE_LEVELS)
            .map(|m| cone_level(h, dir, c0 + dc * m as f64))
            .collect();
        k[0] = 0.0;
        for m in 1..k.len() {
            k[m] = k[m].max(k[m - 1]);
        }
        GaugeTable { c0, dc, k }
    }

    fn eval(&self, c: f64) -> f64 {
        if c <= self.c0 {
            return 0.0;
        }
        let s = (c - self.c0) / self.dc;
        let m = (s as usize).min(self.k.len() - 2);
        let f = s - m as f64;
        self.k[m] + f * (self.k[m + 1] - self.k[m])
    }
}

/// Illinois regula falsi on a decreasing `f` with `f(lo) >= 0 >= f(hi)`.
fn illinois(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let eps = 4.0 * f64::EPSILON * (hi - lo + lo.abs().max(hi.abs()));
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo <= 0.0 {
        return lo;
    }
    if fhi >= 0.0 {
        return hi;
    }
    let mut side = 0;
    for _ in 0..200 {
        if hi - lo <= eps {
            break;
        }
        let mut m = (lo * fhi - hi * flo) / (fhi - flo);
        if !(m > lo && m < hi) {
            m = 0.5 * (lo + hi);
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm > 0.0 {
            lo = m;
            flo = fm;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            hi = m;
            fhi = fm;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    0.5 * (lo + hi)
}

/// Bilinear read of a ring sample relative to its node.
#[derive(Clone, Copy, Debug)]
struct Tap {
    base: isize,
    fx: f64,
    fy: f64,
}

struct Ring {
    radius_cells: f64,
    taps: Vec<Tap>,
}

fn build_ring(dirs: &[Vec2], r: f64, nx: usize) -> Ring {
    // Keep both reads of each axis within the ring's bounding square.
    let split = |o: f64| {
        let mut b = o.floor();
        let mut f = o - b;
        if f > 1.0 - 1e-12 {
            b += 1.0;
            f = 0.0;
        }
        if f < 1e-12 {
            f = 0.0;
            if b >= 1.0 {
                b -= 1.0;
                f = 1.0;
            }
        }
        (b as isize, f)
    };
    let taps = dirs
        .iter()
        .map(|d| {
            let (bx, fx) = split(d.x * r);
            let (by, fy) = split(d.y * r);
            Tap {
                base: bx + by * nx as isize,
                fx,
                fy,
            }
        })
        .collect();
    Ring { radius_cells: r, taps }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    Forward,
    Backward,
    ForwardColumns,
    BackwardColumns,
}

const ORDERS: [SweepOrder; 4] = [
    SweepOrder::Forward,
    SweepOrder::Backward,
    SweepOrder::ForwardColumns,
    SweepOrder::BackwardColumns,
];

struct Relaxer<'a> {
    scheme: &'a RingScheme,
    nx: usize,
    ny: usize,
    spacing: f64,
    /// Rings by distance to the boundary in cells, capped at the stencil.
    rings: Vec<Ring>,
}

impl<'a> Relaxer<'a> {
    fn new(scheme: &'a RingScheme, nx: usize, ny: usize, spacing: f64, stencil_cells: f64) -> Self {
        let dirs = scheme.offsets();
        let dmax = stencil_cells.ceil() as usize;
        let rings = (0..=dmax)
            .map(|d| build_ring(&dirs, (d as f64).min(stencil_cells).max(1.0), nx))
            .collect();
        Relaxer {
            scheme,
            nx,
            ny,
            spacing,
            rings,
        }
    }

    fn relax_node(&self, u: &mut [f64], ring_buf: &mut [f64], i: usize, j: usize) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let d = i.min(j).min(nx - 1 - i).min(ny - 1 - j).min(self.rings.len() - 1);
        let ring = &self.rings[d];
        let idx = (i + j * nx) as isize;
        for (slot, t) in ring_buf.iter_mut().zip(&ring.taps) {
            let b = (idx + t.base) as usize;
            let (v00, v10) = (u[b], u[b + 1]);
            let (v01, v11) = (u[b + nx], u[b + nx + 1]);
            let bottom = v00 + t.fx * (v10 - v00);
            let top = v01 + t.fx * (v11 - v01);
            *slot = bottom + t.fy * (top - bottom);
        }
        let new = self.scheme.update_from(ring_buf, ring.radius_cells * self.spacing, u[idx as usize]);
        let change = (new - u[idx as usize]).abs();
        u[idx as usize] = new;
        change
    }

    fn sweep(&self, u: &mut [f64], order: SweepOrder) -> f64 {
        let mut buf = vec![0.0; self.scheme.directions()];
        let (nx, ny) = (self.nx, self.ny);
        let mut change = 0.0f64;
        match order {
            SweepOrder::Forward | SweepOrder::Backward => {
                let rev = order == SweepOrder::Backward;
                for jj in 1..ny - 1 {
                    let j = if rev { ny - 1 - jj } else { jj };
                    for ii in 1..nx - 1 {
                        let i = if rev { nx - 1 - ii } else { ii };
                        change = change.max(self.relax_node(u, &mut buf, i, j));
                    }
                }
            }
            SweepOrder::ForwardColumns | SweepOrder::BackwardColumns => {
                let rev = order == SweepOrder::BackwardColumns;
                for ii in 1..nx - 1 {
                    let i = if rev { nx - 1 - ii } else { ii };
                    for jj in 1..ny - 1 {
                        let j = if rev { ny - 1 - jj } else { jj };
                        change = change.max(self.relax_node(u, &mut buf, i, j));
                    }
                }
            }
        }
        change
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stop when the largest change in a sweep is at most `tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub directions: usize,
    /// Start from the solution on the grid with twice the spacing.
    pub nested: bool,
    /// Run the comparison-with-cones verifier on the result.
    pub verify: Option<CcOptions>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_sweeps: 20_000,
            directions: DEFAULT_DIRECTIONS,
            nested: true,
            verify: Some(CcOptions::default()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelStats {
    pub n: usize,
    pub sweeps: usize,
    pub update_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub field: GridField,
    /// Sweeps on the finest grid.
    pub sweeps: usize,
    /// Largest change in the last sweep.
    pub update_residual: f64,
    pub converged: bool,
    pub scheme: SchemeKind,
    /// Coarse-to-fine history, coarsest first.
    pub levels: Vec<LevelStats>,
    /// `None` when verification was switched off.
    pub cc: Option<CcReport>,
    pub cc_violation: Option<f64>,
    /// Cone-Lipschitz level of the result.
    pub slope_level: f64,
    /// `max |u_h - I u_2h|` between the result and the interpolated solution
    /// on the grid with twice the spacing; an estimate of the discretization
    /// error. `None` without a coarse level.
    pub coarse_gap: Option<f64>,
}

impl SolveReport {
    /// Tolerance for the flow convexity criteria on the result: a sup-norm
    /// perturbation `ε` moves an equal-step second difference by at most `4ε`.
    pub fn criteria_tolerance(&self) -> Option<f64> {
        self.coarse_gap.map(|g| 4.0 * g)
    }
}

/// Transfinite (Coons) interpolation of the boundary values: exact on
/// bilinear data, in particular on linear data.
fn coons(p: &DirichletProblem) -> Result<GridField> {
    let (nx, ny, h) = (p.n, p.ny(), p.spacing());
    let o = p.domain.min;
    let g = |i: usize, j: usize| (p.g)(o + Vec2::new(i as f64 * h, j as f64 * h));
    let (l, r): (Vec<f64>, Vec<f64>) = (0..ny).map(|j| (g(0, j), g(nx - 1, j))).unzip();
    let (b, t): (Vec<f64>, Vec<f64>) = (0..nx).map(|i| (g(i, 0), g(i, ny - 1))).unzip();
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let s = j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let q = i as f64 / (nx - 1) as f64;
            let v = (1.0 - q) * l[j] + q * r[j] + (1.0 - s) * b[i] + s * t[i]
                - ((1.0 - q) * (1.0 - s) * b[0] + q * (1.0 - s) * b[nx - 1] + (1.0 - q) * s * t[0] + q * s * t[nx - 1]);
            values.push(v);
        }
    }
    GridField::new(o, h, nx, ny, values)
}

fn table_k_max(p: &DirichletProblem, init: &GridField) -> f64 {
    4.0 * cone_lipschitz_level(init, &p.h).k.max(1e-3)
}

fn relax_level(
    p: &DirichletProblem,
    scheme: &RingScheme,
    u: &mut GridField,
    opts: &SolveOptions,
) -> (usize, f64) {
    let relaxer = Relaxer::new(scheme, u.nx(), u.ny(), u.spacing(), p.stencil_cells());
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        residual = relaxer.sweep(u.values_mut(), ORDERS[sweeps % ORDERS.len()]);
        sweeps += 1;
        if residual <= opts.tol {
            break;
        }
    }
    (sweeps, residual)
}

struct LevelResult {
    field: GridField,
    sweeps: usize,
    residual: f64,
    coarse_gap: Option<f64>,
}

fn solve_level(p: &DirichletProblem, scheme: &RingScheme, opts: &SolveOptions, levels: &mut Vec<LevelStats>) -> Result<LevelResult> {
    let mut u = coons(p)?;
    let ny = p.ny();
    let coarse_ok = opts.nested && (p.n - 1) % 2 == 0 && (ny - 1) % 2 == 0 && (p.n - 1) / 2 >= 8 && (ny - 1) / 2 >= 8;
    if coarse_ok {
        let coarse = DirichletProblem {
            n: (p.n - 1) / 2 + 1,
            stencil_radius: p.stencil_radius.map(|r| 2.0 * r),
            ..p.clone()
        };
        let cu = solve_level(&coarse, scheme, opts, levels)?.field;
        for j in 1..ny - 1 {
            for i in 1..p.n - 1 {
                let x = u.point(i, j);
                u.set(i, j, cu.interp_clamped(x));
            }
        }
    }
    let start = coarse_ok.then(|| u.clone());
    let (sweeps, residual) = relax_level(p, scheme, &mut u, opts);
    levels.push(LevelStats {
        n: p.n,
        sweeps,
        update_residual: residual,
    });
    let coarse_gap = start.map(|s| s.max_abs_diff_where(&u, |_| true));
    Ok(LevelResult {
        field: u,
        sweeps,
        residual,
        coarse_gap,
    })
}

/// Gauss-Seidel cone-median relaxation with alternating sweep orders.
pub fn solve_dirichlet(p: &DirichletProblem, opts: &SolveOptions) -> Result<SolveReport> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let init = coons(p)?;
    let scheme = RingScheme::new(&p.h, opts.directions, table_k_max(p, &init))?;
    let mut levels = Vec::new();
    let LevelResult {
        field,
        sweeps,
        residual,
        coarse_gap,
    } = solve_level(p, &scheme, opts, &mut levels)?;
    let cc = opts.verify.as_ref().map(|o| cone_comparison_check(&field, &p.h, o)).transpose()?;
    Ok(SolveReport {
        slope_level: cone_lipschitz_level(&field, &p.h).k,
        cc_violation: cc.as_ref().map(|c| c.worst_violation),
        cc,
        converged: residual <= opts.tol,
        scheme: scheme.kind(),
        levels,
        sweeps,
        update_residual: residual,
        coarse_gap,
        field,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Smallest `k` passing the cone-Lipschitz check.
    pub slope_level: f64,
    /// The check's violation at that level (nonpositive up to rounding).
    pub lipschitz_violation: f64,
    pub cc: CcReport,
    pub criteria: CriteriaReport,
    /// `max(convexity, concavity)` violation of the flow criteria.
    pub criteria_violation: f64,
}

/// Cone-Lipschitz level, comparison with cones and the flow convexity
/// criteria on a 3x3 lattice of probes spaced an eighth of the grid apart
/// around its center. The flow times run up to the largest one whose window
/// stays inside the grid.
pub fn residual_report(u: &GridField, h: &Hamiltonian, cc_opts: &CcOptions, criteria_tol: f64) -> Result<ResidualReport> {
    let level = cone_lipschitz_level(u, h);
    let check = cone_lipschitz_check(u, h, level.k)?;
    let cc = cone_comparison_check(u, h, cc_opts)?;
    let b = u.bounds();
    let c = b.center();
    let probes: Vec<Vec2> = (-1..=1)
        .flat_map(|j| (-1..=1).map(move |i| (i, j)))
        .map(|(i, j)| c + Vec2::new(i as f64 * b.width(), j as f64 * b.height()) / 8.0)
        .collect();
    let lag = Lagrangian::for_field(h, u)?;
    let room = 0.375 * b.width().min(b.height());
    let t_max = room / lag.reach().max(1e-12);
    let schedule: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|s| s * t_max).collect();
    let criteria = lag.convexity_criteria(u, &probes, &schedule, criteria_tol)?;
    Ok(ResidualReport {
        slope_level: level.k,
        lipschitz_violation: check.violation,
        criteria_violation: criteria.convexity_violation.max(criteria.concavity_violation),
        cc,
        criteria,
    })
}
