use thiserror::Error;

use crate::geom::Vec2;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("grid data is not convex: {center:?} lies {excess:e} above the chord {left:?} -- {right:?}")]
    NonConvexGrid {
        left: Vec2,
        center: Vec2,
        right: Vec2,
        excess: f64,
    },

    #[error("minimizer search did not converge; best iterate {best:?} with value {value}")]
    MinimizerNotConverged { best: Vec2, value: f64 },

    #[error("minimum found on the boundary of the search box at {at:?}; enlarge the box")]
    MinimumOnBoundary { at: Vec2 },

    #[error("conjugate maximizer on the primal box boundary for {} dual point(s), first {:?}", offending.len(), offending.first())]
    DualRange { offending: Vec<Vec2> },

    #[error("no subgradient candidates survive at {at:?} with tolerance {tol:e}")]
    EmptySubdifferential { at: Vec2, tol: f64 },

    #[error("sublevel set {{H <= {k}}} is empty (min H = {min})")]
    EmptySublevel { k: f64, min: f64 },

    #[error("box too small: need radius {needed}, have {available}")]
    BoxTooSmall { needed: f64, available: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("slope extrapolations disagree ({plus} vs {minus}); refine the t schedule")]
    RefineSchedule { plus: f64, minus: f64 },

    #[error("bracket failure: field is not cone-Lipschitz at the cap level {cap}")]
    ConeCap { cap: f64 },

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
