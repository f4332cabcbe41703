//! Sampling-based verifiers for absolute minimizers and probes of their
//! local structure.

mod cone_slopes;
mod cones;
mod fits;

pub use cone_slopes::*;
pub use cones::*;
pub use fits::*;
