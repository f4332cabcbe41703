//! Hopf-Lax flows `T^t u(x) = sup_y u(y) - t L((y - x)/t)` and
//! `T_t u(x) = inf_y u(y) + t L((x - y)/t)`, the slope functions built from
//! them, and the convexity/concavity criteria in `t`.
//!
//! The supremum runs over the nodes `q` of a sampled Lagrangian with
//! `y = x + t q`; `u` is read by bilinear interpolation. Linear data is
//! reproduced exactly by this parametrization.

use rayon::prelude::*;
use serde::Serialize;

use crate::convex::conjugate_grid;
use crate::error::{invalid, Error, Result};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;
use crate::hamiltonian::Hamiltonian;

/// Default dual spacing; the radius search runs at a coarser one.
const DUAL_SPACING: f64 = 1.0 / 32.0;
const SEARCH_CELLS: f64 = 64.0;
const PRIMAL_CAP: usize = 2049;
const CIRCLE_DIRS: usize = 720;

/// `min_{|q| = r} (L(q) - L(0)) / r` sampled on the circle, or `None` when the
/// circle leaves the grid.
fn growth_on_circle(l: &GridField, r: f64) -> Option<f64> {
    let l0 = l.interp(Vec2::ZERO)?;
    (0..CIRCLE_DIRS)
        .map(|j| {
            let q = Vec2::polar(std::f64::consts::TAU * j as f64 / CIRCLE_DIRS as f64) * r;
            l.interp(q).map(|v| (v - l0) / r)
        })
        .try_fold(f64::INFINITY, |m, v| v.map(|v| m.min(v)))
}

fn dyadic_radius(l: &GridField, threshold: f64) -> Result<f64> {
    let available = {
        let b = l.bounds();
        b.max.x.min(b.max.y).min(-b.min.x).min(-b.min.y)
    };
    let mut r = 1.0 / 16.0;
    loop {
        match growth_on_circle(l, r) {
            Some(g) if g > threshold => return Ok(r),
            Some(_) => r *= 2.0,
            None => return Err(Error::BoxTooSmall { needed: r, available }),
        }
    }
}

/// Localization radius `R_k`: the smallest dyadic `R` with
/// `min_{|q| = R} (L(q) - L(0))/R > max(k, Lip(k)) + 1`, where `Lip(k)` bounds
/// `|p|` on `{H <= k}`. For `u` with `u(y) - u(x) <= Lip(k)|y - x|` the
/// supremum in `T^t u(x)` is attained within `|y - x| <= R_k t`.
pub fn localization_radius(h: &Hamiltonian, l: &GridField, k: f64) -> Result<f64> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(invalid("k", format!("must be finite and >= 0, got {k}")));
    }
    let lip = h.lipschitz_bound(k.max(h.min_value()));
    dyadic_radius(l, k.max(lip) + 1.0)
}

/// A sampled Lagrangian `L = H*` on a square dual box together with the window
/// of nodes `|q| <= radius` used by the flows.
#[derive(Clone, Debug)]
pub struct Lagrangian {
    field: GridField,
    radius: f64,
    /// Lipschitz bound the window was pruned for; infinite when unpruned.
    lip: f64,
    window: Vec<(Vec2, f64)>,
}

impl Lagrangian {
    /// Conjugate of `h` on `[-radius, radius]^2` with dual spacing `spacing`.
    /// The primal box is doubled until every window node has an interior
    /// maximizer.
    pub fn new(h: &Hamiltonian, radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        if !(spacing > 0.0 && spacing <= radius) {
            return Err(invalid("spacing", format!("must lie in (0, radius], got {spacing}")));
        }
        let half = (radius / spacing).ceil() as usize;
        let n = 2 * half + 1;
        let dual = Rect::centered(radius);
        let inside = radius * (1.0 + 1e-9);
        let mut p_box = 2.0 * (1.0 + h.minimizer().norm());
        for _ in 0..12 {
            let np = ((4.0 * p_box / spacing).ceil() as usize | 1).clamp(257, PRIMAL_CAP);
            let primal = GridField::covering(Rect::centered(p_box), np, |p| h.eval(p))?;
            let conj = conjugate_grid(&primal, dual, n)?;
            if conj.on_boundary.iter().all(|q| q.norm() > inside) {
                return Ok(Self::from_field(conj.field, radius));
            }
            p_box *= 2.0;
        }
        Err(Error::DualRange {
            offending: vec![Vec2::new(radius, 0.0)],
        })
    }

    /// Wraps a sampled `L` whose grid contains `[-radius, radius]^2` and has a
    /// node at the origin.
    pub fn from_field(field: GridField, radius: f64) -> Self {
        let inside = radius * (1.0 + 1e-9);
        let mut window: Vec<(Vec2, f64)> = (0..field.ny())
            .flat_map(|j| (0..field.nx()).map(move |i| (i, j)))
            .map(|(i, j)| (field.point(i, j), field.at(i, j)))
            .filter(|(q, _)| q.norm() <= inside)
            .collect();
        // Row-major order keeps the reads of `u` local.
        window.sort_by(|a, b| a.0.y.total_cmp(&b.0.y).then(a.0.x.total_cmp(&b.0.x)));
        Lagrangian {
            field,
            radius,
            lip: f64::INFINITY,
            window,
        }
    }

    /// Drops window nodes with `L(q) - L(0) > lip |q|`: for data with
    /// Lipschitz constant `lip` they never beat `q = 0`.
    fn pruned(mut self, lip: f64) -> Self {
        let l0 = self.field.interp(Vec2::ZERO).unwrap_or(0.0);
        let slack = 1e-12 * (1.0 + l0.abs());
        self.window.retain(|&(q, l)| l - l0 <= lip * q.norm() + slack);
        self.lip = lip;
        self
    }

    /// A Lagrangian whose window suffices for every `u` with Lipschitz
    /// constant up to `lip`: the smallest dyadic radius with
    /// `(L(q) - L(0)) > lip |q|` beyond it.
    pub fn for_lipschitz(h: &Hamiltonian, lip: f64) -> Result<Self> {
        Lagrangian::for_lipschitz_with(h, lip, DUAL_SPACING)
    }

    /// As [`Lagrangian::for_lipschitz`] with an explicit dual spacing.
    pub fn for_lipschitz_with(h: &Hamiltonian, lip: f64, spacing: f64) -> Result<Self> {
        if !(lip >= 0.0 && lip.is_finite()) {
            return Err(invalid("lip", format!("must be finite and >= 0, got {lip}")));
        }
        let mut r = 1.0;
        for _ in 0..16 {
            let lag = Lagrangian::new(h, r, r / SEARCH_CELLS)?;
            if let Ok(need) = dyadic_radius(&lag.field, lip) {
                if need <= r {
                    return Ok(Lagrangian::new(h, need, spacing.min(need / 8.0))?.pruned(lip));
                }
            }
            r *= 2.0;
        }
        Err(Error::BoxTooSmall {
            needed: r,
            available: r / 2.0,
        })
    }

    /// Window sized from the Lipschitz constant of the bilinear interpolant of `u`.
    pub fn for_field(h: &Hamiltonian, u: &GridField) -> Result<Self> {
        Lagrangian::for_lipschitz(h, std::f64::consts::SQRT_2 * u.lipschitz_estimate())
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// Fails when `u` may be steeper than the bound the window was pruned for.
    pub fn check_field(&self, u: &GridField) -> Result<()> {
        let lip = std::f64::consts::SQRT_2 * u.lipschitz_estimate();
        if lip > self.lip * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Precondition(format!(
                "field Lipschitz bound {lip} exceeds the window bound {}",
                self.lip
            )));
        }
        Ok(())
    }

    /// Largest `|q|` kept in the window; flows at time `t` read `u` within
    /// `t * reach` of the evaluation point.
    pub fn reach(&self) -> f64 {
        self.window.iter().fold(0.0, |m, (q, _)| m.max(q.norm()))
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// The Lagrangian of `p -> H(-p)`, i.e. `q -> L(-q)`.
    pub fn reflected(&self) -> Lagrangian {
        let f = &self.field;
        let mut vals = vec![0.0; f.len()];
        for j in 0..f.ny() {
            for i in 0..f.nx() {
                vals[f.index(i, j)] = f.at(f.nx() - 1 - i, f.ny() - 1 - j);
            }
        }
        let field = GridField::new(f.origin(), f.spacing(), f.nx(), f.ny(), vals).expect("same layout");
        let window = self.window.iter().map(|&(q, v)| (-q, v)).collect();
        Lagrangian {
            field,
            radius: self.radius,
            lip: self.lip,
            window,
        }
    }

    /// `T^t u(x)` at a single point.
    pub fn up_at(&self, u: &GridField, x: Vec2, t: f64) -> FlowPoint {
        self.extremum(u, x, t, 1.0)
    }

    /// `T_t u(x)` at a single point.
    pub fn down_at(&self, u: &GridField, x: Vec2, t: f64) -> FlowPoint {
        self.extremum(u, x, t, -1.0)
    }

    /// `sign = 1`: `max_q u(x + t q) - t L(q)`; `sign = -1`:
    /// `min_q u(x - t q) + t L(q)`, computed as the negated maximum.
    fn extremum(&self, u: &GridField, x: Vec2, t: f64, sign: f64) -> FlowPoint {
        let inv_h = 1.0 / u.spacing();
        let (gx0, gy0) = u.to_grid(x);
        let scale = sign * t * inv_h;
        let (mx, my) = ((u.nx() - 1) as f64, (u.ny() - 1) as f64);
        const SLACK: f64 = 1e-9;
        let mut best = f64::NEG_INFINITY;
        let mut arg = Vec2::ZERO;
        let mut truncated = false;
        for &(q, l) in &self.window {
            let gx = gx0 + q.x * scale;
            let gy = gy0 + q.y * scale;
            if !(gx >= -SLACK && gy >= -SLACK && gx <= mx + SLACK && gy <= my + SLACK) {
                truncated = true;
                continue;
            }
            let val = sign * u.interp_grid(gx.clamp(0.0, mx), gy.clamp(0.0, my)) - t * l;
            if val > best {
                best = val;
                arg = q;
            }
        }
        FlowPoint {
            value: sign * best,
            offset: arg * (sign * t),
            truncated,
        }
    }

    fn flow(&self, u: &GridField, t: f64, sign: f64) -> Result<FlowResult> {
        check_t(t)?;
        self.check_field(u)?;
        let (nx, ny) = (u.nx(), u.ny());
        let pts: Vec<FlowPoint> = (0..nx * ny)
            .into_par_iter()
            .map(|k| self.extremum(u, u.point(k % nx, k / nx), t, sign))
            .collect();
        let field = GridField::new(u.origin(), u.spacing(), nx, ny, pts.iter().map(|p| p.value).collect())?;
        Ok(FlowResult {
            field,
            t,
            window_radius: self.radius * t,
            argmax_map: pts.iter().map(|p| p.offset).collect(),
            truncated: pts.iter().map(|p| p.truncated).collect(),
        })
    }

    pub fn flow_up(&self, u: &GridField, t: f64) -> Result<FlowResult> {
        self.flow(u, t, 1.0)
    }

    pub fn flow_down(&self, u: &GridField, t: f64) -> Result<FlowResult> {
        self.flow(u, t, -1.0)
    }

    /// Slope samples at `x` over `schedule`, with the two-point Richardson
    /// extrapolation of `S^+_t` and `-S^-_t` to `t = 0` from the two smallest
    /// times. Fails when the two extrapolations differ by more than `10 tol`.
    pub fn slopes(&self, u: &GridField, x: Vec2, schedule: &[f64], tol: f64) -> Result<SlopeProfile> {
        let ts = sorted_schedule(schedule)?;
        self.check_field(u)?;
        if ts.len() < 2 {
            return Err(invalid("schedule", "need at least two distinct positive times"));
        }
        let ux = u
            .interp(x)
            .ok_or_else(|| Error::Precondition(format!("probe {x:?} lies outside the grid")))?;
        let mut samples: Vec<SlopeSample> = ts
            .iter()
            .map(|&t| {
                let up = self.up_at(u, x, t);
                let dn = self.down_at(u, x, t);
                SlopeSample {
                    x,
                    t,
                    s_plus: (up.value - ux) / t,
                    s_minus: (dn.value - ux) / t,
                    su_extrapolated: None,
                    truncated: up.truncated || dn.truncated,
                }
            })
            .collect();
        let (a, b) = (&samples[0], &samples[1]);
        let rich = |s1: f64, s2: f64| (b.t * s1 - a.t * s2) / (b.t - a.t);
        let su_plus = rich(a.s_plus, b.s_plus);
        let su_minus = rich(-a.s_minus, -b.s_minus);
        if (su_plus - su_minus).abs() > 10.0 * tol {
            return Err(Error::RefineSchedule {
                plus: su_plus,
                minus: su_minus,
            });
        }
        let su = 0.5 * (su_plus + su_minus);
        for s in &mut samples {
            s.su_extrapolated = Some(su);
        }
        Ok(SlopeProfile {
            x,
            samples,
            su_plus,
            su_minus,
            su,
        })
    }

    /// Second differences of `t -> T^t u(x)` and `t -> T_t u(x)` on
    /// `{0} ∪ schedule` at every probe.
    pub fn convexity_criteria(&self, u: &GridField, probes: &[Vec2], schedule: &[f64], tol: f64) -> Result<CriteriaReport> {
        let mut ts = sorted_schedule(schedule)?;
        self.check_field(u)?;
        ts.insert(0, 0.0);
        if ts.len() < 3 {
            return Err(invalid("schedule", "need at least two distinct positive times"));
        }
        let rows: Vec<ProbeCriteria> = probes
            .par_iter()
            .map(|&x| {
                let ux = u.interp(x).unwrap_or(f64::NAN);
                let mut truncated = false;
                let mut up = vec![ux];
                let mut down = vec![ux];
                for &t in &ts[1..] {
                    let a = self.up_at(u, x, t);
                    let b = self.down_at(u, x, t);
                    truncated |= a.truncated || b.truncated;
                    up.push(a.value);
                    down.push(b.value);
                }
                ProbeCriteria {
                    x,
                    up_second_differences: second_differences(&ts, &up),
                    down_second_differences: second_differences(&ts, &down),
                    up_values: up,
                    down_values: down,
                    truncated,
                }
            })
            .collect();
        if let Some(r) = rows.iter().find(|r| r.up_values[0].is_nan()) {
            return Err(Error::Precondition(format!("probe {:?} lies outside the grid", r.x)));
        }
        let convexity_violation = rows
            .iter()
            .flat_map(|r| r.up_second_differences.iter())
            .fold(0.0f64, |m, &d| m.max(-d));
        let concavity_violation = rows
            .iter()
            .flat_map(|r| r.down_second_differences.iter())
            .fold(0.0f64, |m, &d| m.max(d));
        // Largest t such that every triple ending at or before it passes.
        let mut largest = 0.0;
        for (i, &t) in ts.iter().enumerate().skip(2) {
            let ok = rows
                .iter()
                .all(|r| r.up_second_differences[i - 2] >= -tol && r.down_second_differences[i - 2] <= tol);
            if !ok {
                break;
            }
            largest = t;
        }
        Ok(CriteriaReport {
            times: ts,
            probes: rows,
            convexity_violation,
            concavity_violation,
            tol,
            passes: convexity_violation <= tol && concavity_violation <= tol,
            largest_t_validated: largest,
        })
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    Ok(())
}

fn sorted_schedule(schedule: &[f64]) -> Result<Vec<f64>> {
    for &t in schedule {
        check_t(t)?;
    }
    let mut ts = schedule.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok(ts)
}

/// `f_{i+1} - f_i - (t_{i+1} - t_i)/(t_i - t_{i-1}) (f_i - f_{i-1})`, which is
/// the usual `f_{i+1} - 2 f_i + f_{i-1}` on uniform schedules.
fn second_differences(ts: &[f64], f: &[f64]) -> Vec<f64> {
    (1..ts.len() - 1)
        .map(|i| {
            let r = (ts[i + 1] - ts[i]) / (ts[i] - ts[i - 1]);
            f[i + 1] - f[i] - r * (f[i] - f[i - 1])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowPoint {
    pub value: f64,
    /// `y - x` at the extremizing node.
    pub offset: Vec2,
    /// Some window nodes fell outside the grid and were skipped.
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowResult {
    pub field: GridField,
    pub t: f64,
    pub window_radius: f64,
    pub argmax_map: Vec<Vec2>,
    pub truncated: Vec<bool>,
}

impl FlowResult {
    pub fn truncated_count(&self) -> usize {
        self.truncated.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeSample {
    pub x: Vec2,
    pub t: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub su_extrapolated: Option<f64>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeProfile {
    pub x: Vec2,
    pub samples: Vec<SlopeSample>,
    pub su_plus: f64,
    pub su_minus: f64,
    pub su: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeCriteria {
    pub x: Vec2,
    pub up_values: Vec<f64>,
    pub down_values: Vec<f64>,
    pub up_second_differences: Vec<f64>,
    pub down_second_differences: Vec<f64>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriteriaReport {
    /// `0` followed by the sorted schedule.
    pub times: Vec<f64>,
    pub probes: Vec<ProbeCriteria>,
    /// Largest `-(second difference)` of the upper flow, clipped at 0.
    pub convexity_violation: f64,
    /// Largest second difference of the lower flow, clipped at 0.
    pub concavity_violation: f64,
    pub tol: f64,
    pub passes: bool,
    pub largest_t_validated: f64,
}

pub fn hopflax_up(u: &GridField, h: &Hamiltonian, t: f64) -> Result<FlowResult> {
    Lagrangian::for_field(h, u)?.flow_up(u, t)
}

pub fn hopflax_down(u: &GridField, h: &Hamiltonian, t: f64) -> Result<FlowResult> {
    Lagrangian::for_field(h, u)?.flow_down(u, t)
}

pub fn slopes(u: &GridField, h: &Hamiltonian, x: Vec2, schedule: &[f64], tol: f64) -> Result<SlopeProfile> {
    Lagrangian::for_field(h, u)?.slopes(u, x, schedule, tol)
}

pub fn convexity_criteria_check(
    u: &GridField,
    h: &Hamiltonian,
    probes: &[Vec2],
    schedule: &[f64],
    tol: f64,
) -> Result<CriteriaReport> {
    Lagrangian::for_field(h, u)?.convexity_criteria(u, probes, schedule, tol)
}
