//! Convex calculus: conjugates, subdifferentials, level curves and the
//! no-flat-segment diagnostics.

mod condition_a;
mod conjugate;
mod levelset;
mod subdiff;

pub use condition_a::{
    check_condition_a, estimate_phi, estimate_psi, ConditionAReport, ConditionATolerances, PhiEntry,
};
pub use conjugate::{
    conjugate_grid, fenchel_gap, legendre_transform, legendre_transform_grid, Conjugate, FenchelGap, FenchelPair,
};
pub use levelset::{level_curves, longest_straight_run, Polyline};
pub use subdiff::{
    subdifferential_set, subdifferential_set_with, SubdiffOptions, SubdiffShape, SubdifferentialSet,
};

use crate::geom::Vec2;
use crate::hamiltonian::ConvexOracle;

/// Central-difference gradient with one Richardson step; `s` is the outer step.
pub fn gradient<F: ConvexOracle + ?Sized>(f: &F, p: Vec2, s: f64) -> Vec2 {
    let d = |s: f64| {
        let ex = Vec2::new(s, 0.0);
        let ey = Vec2::new(0.0, s);
        Vec2::new(
            (f.eval(p + ex) - f.eval(p - ex)) / (2.0 * s),
            (f.eval(p + ey) - f.eval(p - ey)) / (2.0 * s),
        )
    };
    (d(0.5 * s) * 4.0 - d(s)) / 3.0
}
