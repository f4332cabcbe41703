//! Chebyshev linear fits on balls, blow-up slope sets and the empirical
//! modulus of the slope field.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::flow::Lagrangian;
use crate::geom::Vec2;
use crate::grid::GridField;
use crate::hamiltonian::Hamiltonian;
use crate::optim::golden_min;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub e: Vec2,
    /// `sup |u(x) - u(x0) - e.(x - x0)| / r` over the ball samples.
    pub deviation: f64,
    pub center: Vec2,
    pub radius: f64,
    pub samples: usize,
    /// No neighbouring `e` at distance 1e-7 improves the objective.
    pub converged: bool,
}

/// Offsets `x - x0` and increments `u(x) - u(x0)` over the grid nodes in the
/// ball plus a circle of boundary samples, optionally restricted to the half
/// disc `(x - x0).d >= 0`.
struct BallSamples {
    dx: Vec<f64>,
    dy: Vec<f64>,
    du: Vec<f64>,
}

impl BallSamples {
    fn new(u: &GridField, x0: Vec2, r: f64, half: Option<Vec2>) -> Result<Self> {
        let b = u.bounds();
        if !(b.contains(x0) && b.inner_distance(x0) >= r * (1.0 - 1e-12)) {
            return Err(Error::Precondition(format!("ball B({x0:?}, {r}) leaves the grid")));
        }
        let u0 = u.interp_clamped(x0);
        let (mut dx, mut dy, mut du) = (Vec::new(), Vec::new(), Vec::new());
        let keep = |p: Vec2| half.is_none_or(|d| (p - x0).dot(d) >= -1e-12 * r);
        let mut push = |p: Vec2, v: f64| {
            if !keep(p) {
                return;
            }
            dx.push(p.x - x0.x);
            dy.push(p.y - x0.y);
            du.push(v - u0);
        };
        let (lo, hi) = (u.nearest(x0 - Vec2::new(r, r)), u.nearest(x0 + Vec2::new(r, r)));
        for j in lo.1..=hi.1 {
            for i in lo.0..=hi.0 {
                let p = u.point(i, j);
                if (p - x0).norm() <= r {
                    push(p, u.at(i, j));
                }
            }
        }
        let ring = ((std::f64::consts::TAU * r / u.spacing()).ceil() as usize).max(64);
        for k in 0..ring {
            let p = x0 + Vec2::polar(std::f64::consts::TAU * k as f64 / ring as f64) * r;
            push(p, u.interp_clamped(p));
        }
        Ok(BallSamples { dx, dy, du })
    }

    fn objective(&self, e: Vec2) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .zip(&self.du)
            .map(|((x, y), d)| (d - e.x * x - e.y * y).abs())
            .fold(0.0, f64::max)
    }

    fn len(&self) -> usize {
        self.du.len()
    }
}

/// Best Chebyshev slope through the center value on `B(x0, r)`.
///
/// The objective is convex in `e`, so its partial minimum over `e_y` is
/// convex in `e_x`; both are minimized by golden-section search.
pub fn lap_probe(u: &GridField, x0: Vec2, r: f64) -> Result<LinearFit> {
    chebyshev_fit(u, x0, r, None)
}

/// As [`lap_probe`] on the half disc `(x - x0).d >= 0`.
pub fn half_disc_fit(u: &GridField, x0: Vec2, r: f64, d: Vec2) -> Result<LinearFit> {
    chebyshev_fit(u, x0, r, Some(d))
}

fn chebyshev_fit(u: &GridField, x0: Vec2, r: f64, half: Option<Vec2>) -> Result<LinearFit> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    let s = BallSamples::new(u, x0, r, half)?;
    let m = s.du.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    // Arc samples within 45 degrees of every direction give
    // F(e) >= |e| r / sqrt(2) - m, while F(0) = m.
    let bound = 3.0 * m / r + 1e-12;
    let tol = 1e-11 * (1.0 + bound);
    let inner = |ex: f64| golden_min(|ey| s.objective(Vec2::new(ex, ey)), -bound, bound, tol);
    let (ex, _) = golden_min(|ex| inner(ex).1, -bound, bound, tol);
    let (ey, f) = inner(ex);
    let e = Vec2::new(ex, ey);
    let step = 1e-7 * (1.0 + bound);
    let converged = (0..8).all(|k| {
        let d = Vec2::polar(std::f64::consts::TAU * k as f64 / 8.0) * step;
        s.objective(e + d) >= f - 1e-12 * (1.0 + m)
    });
    Ok(LinearFit {
        e,
        deviation: f / r,
        center: x0,
        radius: r,
        samples: s.len(),
        converged,
    })
}

/// Objective of [`lap_probe`] at an arbitrary slope, for cross-checks.
pub fn fit_deviation(u: &GridField, x0: Vec2, r: f64, e: Vec2) -> Result<f64> {
    Ok(BallSamples::new(u, x0, r, None)?.objective(e) / r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupOptions {
    /// Flow times for the slope extrapolation.
    pub slope_schedule: Vec<f64>,
    pub slope_tol: f64,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        BlowupOptions {
            slope_schedule: vec![0.05, 0.1],
            slope_tol: 5e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeSet {
    pub center: Vec2,
    pub scales: Vec<f64>,
    /// Fits on the full disc, one per scale.
    pub fits: Vec<LinearFit>,
    /// Fits on the half discs facing `+x, +y, -x, -y`, one set per scale.
    pub half_fits: Vec<[LinearFit; 4]>,
    /// Largest distance between the five slopes fitted at each scale.
    pub spreads: Vec<f64>,
    /// Largest distance between all slopes fitted at the two finest scales.
    pub diameter: f64,
    pub su: f64,
    /// `|H(e) - Su(x0)|` at the finest scale.
    pub slope_residual: f64,
}

/// Linear fits at decreasing scales around `x0` and the slope identity check.
pub fn blowup_probe(u: &GridField, h: &Hamiltonian, x0: Vec2, scales: &[f64], opts: &BlowupOptions) -> Result<DerivativeSet> {
    let lag = Lagrangian::for_field(h, u)?;
    blowup_probe_with(u, h, &lag, x0, scales, opts)
}

/// As [`blowup_probe`] with a prebuilt Lagrangian for the slope flows.
pub fn blowup_probe_with(
    u: &GridField,
    h: &Hamiltonian,
    lag: &Lagrangian,
    x0: Vec2,
    scales: &[f64],
    opts: &BlowupOptions,
) -> Result<DerivativeSet> {
    if scales.len() < 2 {
        return Err(invalid("scales", "need at least two scales"));
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("scales", "must be strictly decreasing"));
    }
    let fits: Vec<LinearFit> = scales.iter().map(|&r| lap_probe(u, x0, r)).collect::<Result<_>>()?;
    let dirs = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0), Vec2::new(0.0, -1.0)];
    let half_fits: Vec<[LinearFit; 4]> = scales
        .iter()
        .map(|&r| {
            let v: Vec<LinearFit> = dirs.iter().map(|&d| half_disc_fit(u, x0, r, d)).collect::<Result<_>>()?;
            Ok([v[0], v[1], v[2], v[3]])
        })
        .collect::<Result<_>>()?;
    let slopes_at = |i: usize| -> Vec<Vec2> {
        std::iter::once(fits[i].e).chain(half_fits[i].iter().map(|f| f.e)).collect()
    };
    let spreads: Vec<f64> = (0..scales.len()).map(|i| diameter_of(&slopes_at(i))).collect();
    let n = scales.len();
    let diameter = diameter_of(&[slopes_at(n - 2), slopes_at(n - 1)].concat());
    let su = lag.slopes(u, x0, &opts.slope_schedule, opts.slope_tol)?.su;
    let finest = fits[fits.len() - 1].e;
    Ok(DerivativeSet {
        center: x0,
        scales: scales.to_vec(),
        slope_residual: (h.eval(finest) - su).abs(),
        fits,
        half_fits,
        spreads,
        diameter,
        su,
    })
}

fn diameter_of(pts: &[Vec2]) -> f64 {
    pts.iter()
        .enumerate()
        .flat_map(|(i, a)| pts[i + 1..].iter().map(move |b| (*a - *b).norm()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModulusRow {
    pub s: f64,
    pub s_over_r: f64,
    /// Largest `|e(x) - e(y)|` over sample points in `B(z, s)`.
    pub rho: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusTable {
    pub center: Vec2,
    pub r: f64,
    pub fit_radius: f64,
    pub rows: Vec<ModulusRow>,
}

/// Empirical modulus of the slope field near `z`. Slopes `e(x)` are
/// Chebyshev fits of radius `fit_radius` (default four grid cells) at the
/// center and at eight points on the circles of radius `s` and `s/2` for
/// every `s`; row `s` uses all sample points in `B(z, s)`, so the table is
/// nondecreasing in `s` by construction.
pub fn modulus_estimate(
    u: &GridField,
    z: Vec2,
    r: f64,
    s_schedule: &[f64],
    fit_radius: Option<f64>,
) -> Result<ModulusTable> {
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    if s_schedule.iter().any(|&s| !(s > 0.0 && s <= r)) {
        return Err(invalid("s_schedule", "entries must lie in (0, r]"));
    }
    let fit_r = fit_radius.unwrap_or(4.0 * u.spacing());
    let mut pts = vec![z];
    for &s in s_schedule {
        for rad in [s, 0.5 * s] {
            pts.extend((0..8).map(|k| z + Vec2::polar(std::f64::consts::TAU * (k as f64 + 0.5) / 8.0) * rad));
        }
    }
    let slopes: Vec<(Vec2, Vec2)> = pts
        .par_iter()
        .map(|&p| lap_probe(u, p, fit_r).map(|f| (p, f.e)))
        .collect::<Result<_>>()?;
    let mut sorted = s_schedule.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rows = sorted
        .iter()
        .map(|&s| {
            let inside: Vec<Vec2> = slopes
                .iter()
                .filter(|(p, _)| (*p - z).norm() <= s * (1.0 + 1e-12))
                .map(|(_, e)| *e)
                .collect();
            let rho = diameter_of(&inside);
            ModulusRow {
                s,
                s_over_r: s / r,
                rho,
                points: inside.len(),
            }
        })
        .collect();
    Ok(ModulusTable {
        center: z,
        r,
        fit_radius: fit_r,
        rows,
    })
}
