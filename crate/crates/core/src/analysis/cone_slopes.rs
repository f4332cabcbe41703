//! Cone slopes on sampled circles and the discrete gradient flow they drive.

use serde::Serialize;

use crate::cone::{cone_exact, cone_level};
use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;
use crate::grid::GridField;
use crate::hamiltonian::Hamiltonian;

pub const DEFAULT_RING: usize = 360;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeSlopeOptions {
    pub samples: usize,
    /// Largest admissible level; larger slopes raise [`Error::ConeCap`].
    pub cap: f64,
}

impl Default for ConeSlopeOptions {
    fn default() -> Self {
        ConeSlopeOptions {
            samples: DEFAULT_RING,
            cap: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeSlope {
    pub x: Vec2,
    pub t: f64,
    /// Smallest `k` with `u(y) - u(x) <= C_k(y - x)` on the sampled circle.
    pub plus: f64,
    /// Minus the smallest `k` with `u(x) - u(y) <= C_k(x - y)`.
    pub minus: f64,
    /// Circle sample where the `plus` constraint is tight.
    pub witness_plus: Vec2,
    pub witness_minus: Vec2,
}

fn ball_inside(u: &GridField, x: Vec2, t: f64) -> bool {
    let b = u.bounds();
    b.contains(x) && b.inner_distance(x) >= t * (1.0 - 1e-12)
}

/// `Ŝ^±_t u(x)` on `samples` equispaced points of the circle `|y - x| = t`.
///
/// Each constraint fixes its own smallest level through the cone gauge, so
/// the slope is a maximum over the samples rather than a bisection over `k`.
pub fn cone_slope(u: &GridField, h: &Hamiltonian, x: Vec2, t: f64) -> Result<ConeSlope> {
    cone_slope_with(u, h, x, t, ConeSlopeOptions::default())
}

pub fn cone_slope_with(u: &GridField, h: &Hamiltonian, x: Vec2, t: f64, opts: ConeSlopeOptions) -> Result<ConeSlope> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if opts.samples < 4 {
        return Err(invalid("samples", "need at least 4 circle samples"));
    }
    if !ball_inside(u, x, t) {
        return Err(Error::Precondition(format!("ball B({x:?}, {t}) leaves the grid")));
    }
    let ux = u.interp_clamped(x);
    let mut plus = (f64::NEG_INFINITY, x);
    let mut minus = (f64::NEG_INFINITY, x);
    for j in 0..opts.samples {
        let z = Vec2::polar(std::f64::consts::TAU * j as f64 / opts.samples as f64) * t;
        let uy = u.interp_clamped(x + z);
        let kp = cone_level(h, z, uy - ux);
        if kp > plus.0 {
            plus = (kp, x + z);
        }
        let km = cone_level(h, -z, ux - uy);
        if km > minus.0 {
            minus = (km, x + z);
        }
    }
    if plus.0 > opts.cap || minus.0 > opts.cap {
        return Err(Error::ConeCap { cap: opts.cap });
    }
    Ok(ConeSlope {
        x,
        t,
        plus: plus.0,
        minus: -minus.0,
        witness_plus: plus.1,
        witness_minus: minus.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowTrace {
    pub points: Vec<Vec2>,
    pub t: f64,
    /// `Ŝ^+_t u(y_{i-1})` for each step `i`.
    pub slope_values: Vec<f64>,
    /// `|u(y_i) - u(y_{i-1}) - C_k(y_i - y_{i-1})|` at the step's slope level.
    pub cone_residuals: Vec<f64>,
    /// The next circle would leave the grid.
    pub exited: bool,
}

impl FlowTrace {
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }
}

/// Discrete gradient flow: from `x0`, repeatedly step to the circle sample
/// where the upper cone slope is attained.
pub fn gradient_flow_trace(u: &GridField, h: &Hamiltonian, x0: Vec2, t: f64, max_steps: usize) -> Result<FlowTrace> {
    gradient_flow_trace_with(u, h, x0, t, max_steps, ConeSlopeOptions::default())
}

pub fn gradient_flow_trace_with(
    u: &GridField,
    h: &Hamiltonian,
    x0: Vec2,
    t: f64,
    max_steps: usize,
    opts: ConeSlopeOptions,
) -> Result<FlowTrace> {
    if !(t >= 2.0 * u.spacing() * (1.0 - 1e-12)) {
        return Err(invalid("t", format!("step {t} is below twice the grid spacing {}", u.spacing())));
    }
    if !u.bounds().contains(x0) {
        return Err(Error::Precondition(format!("start {x0:?} lies outside the grid")));
    }
    let mut trace = FlowTrace {
        points: vec![x0],
        t,
        slope_values: Vec::new(),
        cone_residuals: Vec::new(),
        exited: false,
    };
    let mut y = x0;
    for _ in 0..max_steps {
        if !ball_inside(u, y, t) {
            trace.exited = true;
            break;
        }
        let s = cone_slope_with(u, h, y, t, opts)?;
        let next = s.witness_plus;
        let gain = u.interp_clamped(next) - u.interp_clamped(y);
        trace.cone_residuals.push((gain - cone_exact(h, s.plus, next - y)).abs());
        trace.slope_values.push(s.plus);
        trace.points.push(next);
        y = next;
    }
    Ok(trace)
}
